use std::fs;
use std::path::{Path, PathBuf};

use foveaprobe_core::sim::{simulate_session, synthetic_gaze_trace, SessionConfig};
use foveaprobe_core::trace::{read_gaze_csv, write_log_csv, Gaze, GazeTrace};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GazeSource};
use crate::error::{compute, CliError};
use crate::io::{write_atomic, write_manifest, ManifestRow, MANIFEST};

/// One combination of the sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub fps: f64,
    pub foveation_strength: f64,
    pub foveal_diameter: f64,
    pub t_scan: f64,
    pub attack: bool,
    /// File-name fragment, e.g. `fps120` or `fps72-str0.5-null`.
    pub label: String,
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().map(|v| Some(*v)).collect()
    }
}

/// Cartesian product of the sweep axes in a fixed order: fps, strength,
/// foveal diameter, scan time, attack. Only swept axes appear in labels.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let mut out = Vec::new();
    for &fps in &s.fps {
        for strength in axis(&s.foveation_strength) {
            for fd in axis(&s.foveal_diameter) {
                for ts in axis(&s.t_scan_s) {
                    for attack in axis(&s.attack) {
                        let mut label = format!("fps{fps}");
                        if let Some(v) = strength {
                            label.push_str(&format!("-str{v}"));
                        }
                        if let Some(v) = fd {
                            label.push_str(&format!("-fd{v}"));
                        }
                        if let Some(v) = ts {
                            label.push_str(&format!("-ts{}ms", v * 1000.0));
                        }
                        if let Some(v) = attack {
                            label.push_str(if v { "-attack" } else { "-null" });
                        }
                        out.push(SweepPoint {
                            fps,
                            foveation_strength: strength.unwrap_or(1.0),
                            foveal_diameter: fd.unwrap_or(cfg.foveation.foveal_diameter),
                            t_scan: ts.unwrap_or(cfg.scan.t_scan),
                            attack: attack.unwrap_or(true),
                            label,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Noise seed of a (seed, sweep point) pair; distinct points get
/// independent noise while the gaze trace stays tied to the seed alone.
pub fn noise_seed(seed: u64, point: usize) -> u64 {
    let mut z = seed ^ (point as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn session_config(cfg: &ExperimentConfig, point: &SweepPoint, noise_seed: u64) -> SessionConfig {
    let mut foveation = cfg.foveation.clone();
    foveation.foveal_diameter = point.foveal_diameter;
    let mut schedule = cfg.scan.clone();
    schedule.t_scan = point.t_scan;
    schedule.fov_x = foveation.fov_x;
    schedule.fov_y = foveation.fov_y;
    schedule.active = point.attack;
    let mut cost = cfg
        .cost
        .clone()
        .with_fps(point.fps)
        .with_foveation_strength(point.foveation_strength);
    cost.seed = noise_seed;
    SessionConfig {
        schedule,
        hco: cfg.hco.clone(),
        cost,
        foveation,
        polarity: cfg.profile.polarity(),
        duration: cfg.duration_s,
    }
}

fn load_gaze(path: &Path) -> Result<GazeTrace, CliError> {
    let missing = |reason: String| CliError::MissingInput {
        what: "gaze trace",
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| missing(e.to_string()))?;
    read_gaze_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("gaze trace {}: {e}", path.display())))
}

fn gaze_for_seed(cfg: &ExperimentConfig, seed: u64, file: Option<&GazeTrace>) -> GazeTrace {
    let g = &cfg.gaze;
    match (g.source, file) {
        (_, Some(trace)) => trace.clone(),
        (GazeSource::Fixed, None) => GazeTrace::fixed(Gaze::new(g.fixed[0], g.fixed[1]), cfg.duration_s),
        _ => synthetic_gaze_trace(
            cfg.duration_s,
            cfg.foveation.fov_x,
            cfg.foveation.fov_y,
            g.extent,
            g.rate_hz,
            seed,
        ),
    }
}

pub fn log_file_name(cfg: &ExperimentConfig, point: &SweepPoint, seed: u64) -> String {
    format!("{}_{}_{}.csv", cfg.profile, point.label, seed)
}

/// Simulates one log per (sweep point, seed) into `<out>/logs`, plus the
/// manifest. `gaze_override` replaces the configured gaze source.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, gaze_override: Option<&Path>) -> Result<Vec<ManifestRow>, CliError> {
    let gaze_path: Option<PathBuf> = gaze_override.map(Path::to_path_buf).or_else(|| cfg.gaze_path());
    let file_trace = gaze_path.as_deref().map(load_gaze).transpose()?;
    let gaze_name = match (&gaze_path, cfg.gaze.source) {
        (Some(p), _) => format!("file:{}", p.file_name().and_then(|n| n.to_str()).unwrap_or_default()),
        (None, GazeSource::Fixed) => format!("fixed({},{})", cfg.gaze.fixed[0], cfg.gaze.fixed[1]),
        _ => "synthetic".to_string(),
    };
    let points = sweep_points(cfg);
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let dir = out.join("logs");
    let rows: Vec<ManifestRow> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let point = &points[i];
            let ns = noise_seed(seed, i);
            let session = session_config(cfg, point, ns);
            let trace = gaze_for_seed(cfg, seed, file_trace.as_ref());
            let name = log_file_name(cfg, point, seed);
            let log = simulate_session(&trace, &session).map_err(compute(format!("simulating {name}")))?;
            let mut bytes = Vec::new();
            write_log_csv(&log, &mut bytes).map_err(compute(format!("serializing {name}")))?;
            write_atomic(&dir.join(&name), &bytes)?;
            log::info!("wrote {name} ({} frames)", log.len());
            Ok(ManifestRow {
                file: name,
                profile: cfg.profile.to_string(),
                seed,
                noise_seed: ns,
                fps: point.fps,
                foveation_strength: point.foveation_strength,
                foveal_diameter: point.foveal_diameter,
                t_scan_s: point.t_scan,
                attack: point.attack,
                gaze: gaze_name.clone(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    write_manifest(&dir.join(MANIFEST), &rows)?;
    Ok(rows)
}
