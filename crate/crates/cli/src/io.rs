//! Atomic file output, log discovery and the simulation manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use foveaprobe_core::trace::{read_log_csv, MetricPolarity, SessionLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{compute, CliError};

pub const MANIFEST: &str = "manifest.csv";

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(format!("temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming onto {}", path.display()), e.error))?;
    Ok(())
}

/// CSV text from a header and preformatted rows.
pub fn csv_bytes<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<(), CliError> {
    write_atomic(path, &csv_bytes(header, rows))
}

/// Fixed six-decimal rendering used in every summary table.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One simulated log and the sweep point that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub profile: String,
    pub seed: u64,
    pub noise_seed: u64,
    pub fps: f64,
    pub foveation_strength: f64,
    pub foveal_diameter: f64,
    pub t_scan_s: f64,
    pub attack: bool,
    pub gaze: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(compute("serializing manifest"))?;
    }
    write_atomic(path, &w.into_inner().expect("in-memory flush"))
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, ManifestRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for row in r.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        out.insert(row.file.clone(), row);
    }
    Ok(out)
}

/// A parsed session log with its file name and manifest entry, if any.
#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub name: String,
    pub log: SessionLog,
    pub meta: Option<ManifestRow>,
}

impl LoadedLog {
    pub fn stem(&self) -> &str {
        self.name.strip_suffix(".csv").unwrap_or(&self.name)
    }
}

/// Drops logs the manifest marks as null sessions: they hold no HCO sweep,
/// so there is no gaze to calibrate against or infer.
pub fn without_null_sessions(logs: Vec<LoadedLog>) -> Vec<LoadedLog> {
    let before = logs.len();
    let kept: Vec<LoadedLog> = logs
        .into_iter()
        .filter(|l| l.meta.as_ref().is_none_or(|m| m.attack))
        .collect();
    if kept.len() < before {
        log::info!("skipping {} null-session logs", before - kept.len());
    }
    kept
}

/// Every `*.csv` log in `dir` except the manifest, sorted by file name.
pub fn load_logs(dir: &Path, polarity: MetricPolarity) -> Result<Vec<LoadedLog>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::MissingInput {
        what: "log directory",
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if p.is_file() && name.ends_with(".csv") && name != MANIFEST {
            paths.push(p);
        }
    }
    paths.sort();
    let manifest_path = dir.join(MANIFEST);
    let manifest = if manifest_path.is_file() {
        read_manifest(&manifest_path)?
    } else {
        BTreeMap::new()
    };
    paths
        .par_iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let file = fs::File::open(p).map_err(|e| CliError::io(format!("opening {}", p.display()), e))?;
            let log = read_log_csv(std::io::BufReader::new(file), polarity).map_err(compute(format!("reading {}", p.display())))?;
            let meta = manifest.get(&name).cloned();
            Ok(LoadedLog { name, log, meta })
        })
        .collect()
}
