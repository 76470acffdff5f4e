//! Config-driven experiment runner around `foveaprobe-core`: simulate scan
//! sessions, calibrate offsets, infer gaze, detect scans and render reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod detect;
pub mod error;
pub mod infer;
pub mod io;
pub mod report;
pub mod simulate;
pub mod svg;

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use foveaprobe_core::profile::Profile;

pub use config::ExperimentConfig;
pub use error::CliError;

use crate::calibrate::CalibrationFile;
use crate::detect::DetectorModelFile;
use crate::io::LoadedLog;

/// f64 ordered by `total_cmp`, for grouping keys.
#[derive(Debug, Clone, Copy)]
pub struct FpsKey(pub f64);

impl PartialEq for FpsKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FpsKey {}

impl PartialOrd for FpsKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FpsKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Sweep condition of a log. Fields other than `fps` are known only from
/// the simulation manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Condition {
    pub fps: FpsKey,
    pub foveation_strength: Option<FpsKey>,
    pub foveal_diameter: Option<FpsKey>,
    pub t_scan_s: Option<FpsKey>,
}

impl Condition {
    pub fn of(cfg: &ExperimentConfig, log: &LoadedLog) -> Self {
        let m = log.meta.as_ref();
        Condition {
            fps: FpsKey(group_fps(cfg, log)),
            foveation_strength: m.map(|m| FpsKey(m.foveation_strength)),
            foveal_diameter: m.map(|m| FpsKey(m.foveal_diameter)),
            t_scan_s: m.map(|m| FpsKey(m.t_scan_s)),
        }
    }
}

/// Frame-rate group of a log: the manifest value, or else the configured
/// target nearest to its measured frame rate.
pub fn group_fps(cfg: &ExperimentConfig, log: &LoadedLog) -> f64 {
    match &log.meta {
        Some(m) => m.fps,
        None => cfg.nearest_target(log.log.mean_frame_rate()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "foveaprobe", version, about = "Foveated-rendering timing side-channel experiments")]
pub struct Cli {
    /// TOML experiment config; profile defaults apply to every missing key
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory for all artifacts
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Replace the configured seed list with this single seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Platform preset: desktop, vr-mqp or vr-varjo (overrides the config)
    #[arg(long, global = true, value_name = "NAME")]
    pub profile: Option<Profile>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one session log per (sweep point, seed) into <out>/logs
    Simulate {
        /// Gaze-trace CSV (t_s,x_deg,y_deg) replacing the configured source
        #[arg(long, value_name = "PATH")]
        gaze: Option<PathBuf>,
    },
    /// Fit the profile's offset model per frame rate; writes calibration.toml and loocv.csv
    Calibrate {
        /// Directory of session logs [default: <out>/logs]
        #[arg(long, value_name = "DIR")]
        logs: Option<PathBuf>,
    },
    /// Infer gaze from session logs; writes <out>/infer
    Infer {
        /// Directory of session logs [default: <out>/logs]
        #[arg(long, value_name = "DIR")]
        logs: Option<PathBuf>,
        /// Calibration file [default: <out>/calibration.toml if present, else zero offsets]
        #[arg(long, value_name = "PATH")]
        calibration: Option<PathBuf>,
    },
    /// Extract window features and run the scan detectors; writes <out>/detect
    Detect {
        /// Directory of session logs [default: <out>/logs]
        #[arg(long, value_name = "DIR")]
        logs: Option<PathBuf>,
        /// Apply a saved detector_model.toml instead of fitting
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Summary tables and SVG plots from the infer and detect outputs; writes <out>/report
    Report {
        /// Artifact directory to read [default: <out>]
        #[arg(long, value_name = "DIR")]
        artifacts: Option<PathBuf>,
    },
}

fn logs_dir(out: &Path, logs: Option<PathBuf>) -> PathBuf {
    logs.unwrap_or_else(|| out.join("logs"))
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), cli.profile)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let out = cli.out;
    match cli.command {
        Command::Simulate { gaze } => {
            let rows = simulate::cmd_simulate(&cfg, &out, gaze.as_deref())?;
            println!("simulated {} logs into {}", rows.len(), out.join("logs").display());
        }
        Command::Calibrate { logs } => {
            let file = calibrate::cmd_calibrate(&cfg, &logs_dir(&out, logs), &out)?;
            for g in &file.groups {
                let mut label = format!("{} FPS", g.fps);
                for (name, v) in [
                    ("strength", g.foveation_strength),
                    ("fovea", g.foveal_diameter),
                    ("t_scan", g.t_scan_s),
                ] {
                    if let Some(v) = v {
                        label.push_str(&format!(", {name} {v}"));
                    }
                }
                println!(
                    "{label}: {} model, objective x {:.3} y {:.3} deg over {} scans",
                    g.model.variant_name(),
                    g.objective_x,
                    g.objective_y,
                    g.scans
                );
            }
        }
        Command::Infer { logs, calibration } => {
            let cal = match calibration {
                Some(p) => Some(CalibrationFile::load(&p)?),
                None => {
                    let default = out.join("calibration.toml");
                    if default.is_file() {
                        Some(CalibrationFile::load(&default)?)
                    } else {
                        log::warn!("no calibration found; using zero offsets");
                        None
                    }
                }
            };
            let results = infer::cmd_infer(&cfg, &logs_dir(&out, logs), cal.as_ref(), &out)?;
            let (n, sx, sy) = results.iter().fold((0usize, 0.0, 0.0), |(n, sx, sy), r| {
                (
                    n + r.errors_x.len(),
                    sx + r.errors_x.iter().sum::<f64>(),
                    sy + r.errors_y.iter().sum::<f64>(),
                )
            });
            if n > 0 {
                println!(
                    "inferred {} logs; mean |error| x {:.3} y {:.3} deg over {n} samples",
                    results.len(),
                    sx / n as f64,
                    sy / n as f64
                );
            } else {
                println!("inferred {} logs (no ground truth)", results.len());
            }
        }
        Command::Detect { logs, model } => {
            let model = model.as_deref().map(DetectorModelFile::load).transpose()?;
            let s = detect::cmd_detect(&cfg, &logs_dir(&out, logs), model.as_ref(), &out)?;
            let f1 = |m: &foveaprobe_core::detector::DetectionMetrics| {
                if m.f1_defined() {
                    format!("{:.3}", m.f1)
                } else {
                    "undefined".into()
                }
            };
            println!("k-means F1 {} over {} windows ({} skipped)", f1(&s.kmeans), s.windows, s.skipped);
            for (fps, m) in &s.kmeans_by_fps {
                println!("  {fps} FPS: F1 {}", f1(m));
            }
            if let Some(m) = &s.logistic {
                println!("logistic F1 {}", f1(m));
            }
        }
        Command::Report { artifacts } => {
            let dir = artifacts.unwrap_or(out);
            let r = report::cmd_report(&dir)?;
            for p in &r.written {
                println!("wrote {}", p.display());
            }
            for p in &r.missing {
                eprintln!("missing input: {}", p.display());
            }
        }
    }
    Ok(())
}
