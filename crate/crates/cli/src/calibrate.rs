use std::collections::BTreeMap;
use std::path::Path;

use foveaprobe_core::inference::{
    calibrate_constant, calibrate_linear, calibrate_tangent, evaluate_loocv, mean_abs_error, run_inference, Fov,
    InferenceError, OffsetModel, ScanEstimate,
};
use foveaprobe_core::profile::{OffsetFamily, Profile};
use foveaprobe_core::trace::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{compute, CliError};
use crate::io::{load_logs, num, without_null_sessions, write_atomic, write_csv, LoadedLog};
use crate::{Condition, FpsKey};

/// Calibrated offsets of one sweep condition. The optional fields are
/// absent when the logs came without a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGroup {
    pub fps: f64,
    pub foveation_strength: Option<f64>,
    pub foveal_diameter: Option<f64>,
    pub t_scan_s: Option<f64>,
    pub logs: usize,
    pub scans: usize,
    /// Mean absolute calibration error per axis, degrees.
    pub objective_x: f64,
    pub objective_y: f64,
    pub model: OffsetModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub profile: Profile,
    pub family: OffsetFamily,
    pub groups: Vec<CalibrationGroup>,
}

impl CalibrationFile {
    /// Model for a log: among groups agreeing with every known field of
    /// `cond` (falling back to all groups), the one nearest in frame rate.
    pub fn model_for(&self, cond: &Condition) -> Option<&OffsetModel> {
        let agrees = |g: &CalibrationGroup| {
            let same = |a: Option<f64>, b: Option<FpsKey>| match (a, b) {
                (Some(a), Some(b)) => FpsKey(a) == b,
                _ => true,
            };
            same(g.foveation_strength, cond.foveation_strength)
                && same(g.foveal_diameter, cond.foveal_diameter)
                && same(g.t_scan_s, cond.t_scan_s)
        };
        let fps = cond.fps.0;
        let dist = |g: &&CalibrationGroup| FpsKey((g.fps - fps).abs());
        self.groups
            .iter()
            .filter(|g| agrees(g))
            .min_by_key(dist)
            .or_else(|| self.groups.iter().min_by_key(dist))
            .map(|g| &g.model)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
            what: "calibration file",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub const LOOCV_HEADER: [&str; 13] = [
    "fps", "foveation_strength", "foveal_diameter", "t_scan_s", "held_out", "n_x", "mae_x_deg", "sd_x_deg", "n_y", "mae_y_deg", "sd_y_deg", "skipped", "model",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Participant {
    Seed(u64),
    File(String),
}

impl std::fmt::Display for Participant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Participant::Seed(s) => write!(f, "seed{s}"),
            Participant::File(n) => f.write_str(n),
        }
    }
}

/// Runs the configured calibrator, returning the model and per-axis objective.
pub fn calibrate(
    estimates: &[ScanEstimate],
    cfg: &ExperimentConfig,
) -> Result<(OffsetModel, (f64, f64)), InferenceError> {
    let family = cfg.calibration.family;
    match family {
        OffsetFamily::Constant => {
            let model = calibrate_constant(estimates)?;
            let obj = |axis| mean_abs_error(estimates, axis, &model).unwrap_or(f64::NAN);
            Ok((model, (obj(Axis::X), obj(Axis::Y))))
        }
        OffsetFamily::Linear => calibrate_linear(estimates, &cfg.calibration.linear),
        OffsetFamily::Tangent => {
            let fit = calibrate_tangent(estimates, &cfg.calibration.tangent)?;
            Ok((fit.model(), (fit.x.objective, fit.y.objective)))
        }
    }
}

/// Raw (un-offset) scan estimates of one log.
pub fn raw_estimates(log: &LoadedLog, cfg: &ExperimentConfig) -> Result<Vec<ScanEstimate>, CliError> {
    let fov = Fov {
        x: cfg.foveation.fov_x,
        y: cfg.foveation.fov_y,
    };
    run_inference(&log.log, &cfg.smoothing, &OffsetModel::IDENTITY, fov)
        .map(|o| o.estimates)
        .map_err(compute(format!("inference on {}", log.name)))
}

fn model_string(m: &OffsetModel) -> String {
    match m {
        OffsetModel::Constant { dx, dy } => format!("dx={dx} dy={dy}"),
        OffsetModel::Linear { a_x, b_x, a_y, b_y } => format!("a_x={a_x} b_x={b_x} a_y={a_y} b_y={b_y}"),
        OffsetModel::Tangent { x, y } => format!(
            "c_x={} a_x={} k_x={} c_y={} a_y={} k_y={}",
            x.c, x.a, x.k, y.c, y.a, y.k
        ),
    }
}

/// Calibrates one model per sweep condition from the logs in `logs_dir`
/// and writes `calibration.toml` and `loocv.csv` to `out`. Participants for
/// leave-one-out are the simulation seeds, or the files without a manifest.
pub fn cmd_calibrate(cfg: &ExperimentConfig, logs_dir: &Path, out: &Path) -> Result<CalibrationFile, CliError> {
    let logs = without_null_sessions(load_logs(logs_dir, cfg.profile.polarity())?);
    let estimates: Vec<Vec<ScanEstimate>> = logs
        .par_iter()
        .map(|l| raw_estimates(l, cfg))
        .collect::<Result<_, _>>()?;

    // condition -> participant -> estimates
    let mut groups: BTreeMap<Condition, BTreeMap<Participant, Vec<ScanEstimate>>> = BTreeMap::new();
    let mut log_counts: BTreeMap<Condition, usize> = BTreeMap::new();
    for (l, est) in logs.iter().zip(estimates) {
        let key = Condition::of(cfg, l);
        let participant = match &l.meta {
            Some(m) => Participant::Seed(m.seed),
            None => Participant::File(l.name.clone()),
        };
        groups.entry(key).or_default().entry(participant).or_default().extend(est);
        *log_counts.entry(key).or_default() += 1;
    }
    if groups.is_empty() {
        return Err(CliError::Compute(
            anyhow::Error::new(InferenceError::NoScans(Axis::X)).context(format!("no logs in {}", logs_dir.display())),
        ));
    }

    let results: Vec<(CalibrationGroup, Vec<Vec<String>>)> = groups
        .par_iter()
        .map(|(key, parts)| {
            let opt = |v: Option<FpsKey>| v.map(|k| num(k.0)).unwrap_or_default();
            let cond = [num(key.fps.0), opt(key.foveation_strength), opt(key.foveal_diameter), opt(key.t_scan_s)];
            let all: Vec<ScanEstimate> = parts.values().flatten().copied().collect();
            let (model, (ox, oy)) = calibrate(&all, cfg).map_err(compute(format!("calibrating {} FPS", key.fps.0)))?;
            let mut rows = Vec::new();
            if parts.len() >= 2 {
                let names: Vec<&Participant> = parts.keys().collect();
                let folds: Vec<Vec<ScanEstimate>> = parts.values().cloned().collect();
                let report = evaluate_loocv(&folds, |train| calibrate(train, cfg).map(|(m, _)| m))
                    .map_err(compute(format!("leave-one-out at {} FPS", key.fps.0)))?;
                for f in &report.folds {
                    rows.push(cond.iter().cloned().chain([
                        names[f.held_out].to_string(),
                        f.x.n.to_string(),
                        num(f.x.mean),
                        num(f.x.sd),
                        f.y.n.to_string(),
                        num(f.y.mean),
                        num(f.y.sd),
                        f.skipped.to_string(),
                        model_string(&f.model),
                    ]).collect());
                }
                rows.push(cond.iter().cloned().chain([
                    "mean".into(),
                    report.mean_x.n.to_string(),
                    num(report.mean_x.mean),
                    num(report.mean_x.sd),
                    report.mean_y.n.to_string(),
                    num(report.mean_y.mean),
                    num(report.mean_y.sd),
                    report.folds.iter().map(|f| f.skipped).sum::<usize>().to_string(),
                    String::new(),
                ]).collect());
            }
            Ok((
                CalibrationGroup {
                    fps: key.fps.0,
                    foveation_strength: key.foveation_strength.map(|k| k.0),
                    foveal_diameter: key.foveal_diameter.map(|k| k.0),
                    t_scan_s: key.t_scan_s.map(|k| k.0),
                    logs: log_counts[key],
                    scans: all.len(),
                    objective_x: ox,
                    objective_y: oy,
                    model,
                },
                rows,
            ))
        })
        .collect::<Result<_, CliError>>()?;

    let mut file = CalibrationFile {
        profile: cfg.profile,
        family: cfg.calibration.family,
        groups: Vec::new(),
    };
    let mut loocv_rows = Vec::new();
    for (g, rows) in results {
        log::info!("{} FPS: {} (objective {:.3}/{:.3})", g.fps, model_string(&g.model), g.objective_x, g.objective_y);
        file.groups.push(g);
        loocv_rows.extend(rows);
    }
    let text = toml::to_string(&file).map_err(compute("serializing calibration"))?;
    write_atomic(&out.join("calibration.toml"), text.as_bytes())?;
    write_csv(&out.join("loocv.csv"), &LOOCV_HEADER, &loocv_rows)?;
    Ok(file)
}
