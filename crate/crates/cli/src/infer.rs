use std::collections::BTreeMap;
use std::path::Path;

use foveaprobe_core::inference::{run_inference, AxisStats, Fov, OffsetModel};
use rayon::prelude::*;

use crate::calibrate::CalibrationFile;
use crate::config::ExperimentConfig;
use crate::error::{compute, CliError};
use crate::io::{load_logs, num, opt_num, without_null_sessions, write_csv, LoadedLog};
use crate::{group_fps, Condition, FpsKey};

pub const PRED_HEADER: [&str; 7] = ["t_s", "pred_x_deg", "pred_y_deg", "gt_x_deg", "gt_y_deg", "err_x_deg", "err_y_deg"];
pub const SCANS_HEADER: [&str; 8] = [
    "scan_id", "axis", "t_s", "frames", "p_initial_deg", "p_final_deg", "gt_deg", "err_deg",
];
pub const SUMMARY_HEADER: [&str; 11] = [
    "file",
    "fps",
    "foveation_strength",
    "foveal_diameter",
    "t_scan_s",
    "seed",
    "samples",
    "mae_x_deg",
    "mae_y_deg",
    "short_windows",
    "domain_skipped",
];
pub const CONDITION_HEADER: [&str; 10] = [
    "fps",
    "foveation_strength",
    "foveal_diameter",
    "t_scan_s",
    "logs",
    "samples",
    "mae_x_deg",
    "sd_x_deg",
    "mae_y_deg",
    "sd_y_deg",
];

/// Per-log inference result kept for the summaries.
#[derive(Debug, Clone)]
pub struct LogResult {
    pub name: String,
    pub fps: f64,
    pub errors_x: Vec<f64>,
    pub errors_y: Vec<f64>,
    pub summary: Vec<String>,
}

fn infer_one(log: &LoadedLog, cfg: &ExperimentConfig, model: &OffsetModel, dir: &Path) -> Result<LogResult, CliError> {
    let fov = Fov {
        x: cfg.foveation.fov_x,
        y: cfg.foveation.fov_y,
    };
    let out = run_inference(&log.log, &cfg.smoothing, model, fov).map_err(compute(format!("inference on {}", log.name)))?;
    let mut pred_rows = Vec::with_capacity(out.samples.len());
    let (mut ex, mut ey) = (Vec::new(), Vec::new());
    for s in &out.samples {
        let err = s.abs_error();
        if let Some((x, y)) = err {
            ex.push(x);
            ey.push(y);
        }
        pred_rows.push(vec![
            num(s.sample.t),
            num(s.sample.x),
            num(s.sample.y),
            opt_num(s.gt.map(|g| g.x)),
            opt_num(s.gt.map(|g| g.y)),
            opt_num(err.map(|e| e.0)),
            opt_num(err.map(|e| e.1)),
        ]);
    }
    let scan_rows: Vec<Vec<String>> = out
        .estimates
        .iter()
        .map(|e| {
            vec![
                e.scan_id.to_string(),
                e.axis.to_string(),
                num(e.t),
                e.frames.to_string(),
                num(e.p_initial),
                num(e.p_final),
                opt_num(e.gt),
                opt_num(e.error().map(f64::abs)),
            ]
        })
        .collect();
    write_csv(&dir.join(format!("{}_pred.csv", log.stem())), &PRED_HEADER, &pred_rows)?;
    write_csv(&dir.join(format!("{}_scans.csv", log.stem())), &SCANS_HEADER, &scan_rows)?;

    let fps = group_fps(cfg, log);
    let m = log.meta.as_ref();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let summary = vec![
        log.name.clone(),
        num(fps),
        opt_num(m.map(|m| m.foveation_strength)),
        opt_num(m.map(|m| m.foveal_diameter)),
        opt_num(m.map(|m| m.t_scan_s)),
        m.map(|m| m.seed.to_string()).unwrap_or_default(),
        ex.len().to_string(),
        opt_num(mean(&ex)),
        opt_num(mean(&ey)),
        out.short_windows.len().to_string(),
        out.domain_skipped.len().to_string(),
    ];
    Ok(LogResult {
        name: log.name.clone(),
        fps,
        errors_x: ex,
        errors_y: ey,
        summary,
    })
}

/// Applies the calibration to every log, writing per-log prediction and
/// per-scan CSVs plus `summary.csv` and `error_by_condition.csv` under
/// `<out>/infer`. Without a calibration every scan uses zero offsets.
pub fn cmd_infer(
    cfg: &ExperimentConfig,
    logs_dir: &Path,
    calibration: Option<&CalibrationFile>,
    out: &Path,
) -> Result<Vec<LogResult>, CliError> {
    let logs = without_null_sessions(load_logs(logs_dir, cfg.profile.polarity())?);
    let dir = out.join("infer");
    let results: Vec<LogResult> = logs
        .par_iter()
        .map(|l| {
            let model = calibration
                .and_then(|c| c.model_for(&Condition::of(cfg, l)))
                .copied()
                .unwrap_or(OffsetModel::IDENTITY);
            infer_one(l, cfg, &model, &dir)
        })
        .collect::<Result<_, _>>()?;

    let summary: Vec<Vec<String>> = results.iter().map(|r| r.summary.clone()).collect();
    write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary)?;

    let mut by_condition: BTreeMap<Condition, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (l, r) in logs.iter().zip(&results) {
        let e = by_condition.entry(Condition::of(cfg, l)).or_default();
        e.0 += 1;
        e.1.extend_from_slice(&r.errors_x);
        e.2.extend_from_slice(&r.errors_y);
    }
    let show = |v: Option<FpsKey>| v.map(|k| num(k.0)).unwrap_or_default();
    let rows: Vec<Vec<String>> = by_condition
        .iter()
        .filter(|(_, (_, ex, _))| !ex.is_empty())
        .map(|(c, (n, ex, ey))| {
            let (sx, sy) = (AxisStats::from_errors(ex), AxisStats::from_errors(ey));
            vec![
                num(c.fps.0),
                show(c.foveation_strength),
                show(c.foveal_diameter),
                show(c.t_scan_s),
                n.to_string(),
                sx.n.to_string(),
                num(sx.mean),
                num(sx.sd),
                num(sy.mean),
                num(sy.sd),
            ]
        })
        .collect();
    write_csv(&dir.join("error_by_condition.csv"), &CONDITION_HEADER, &rows)?;
    Ok(results)
}
