//! Scan-based gaze inference: per-window conditioning, extremum
//! localisation, offset correction and X/Y pairing, plus calibration of the
//! offset models and leave-one-group-out evaluation.

mod calibrate;
mod loocv;
mod offset;

pub use calibrate::{
    calibrate_constant, calibrate_linear, calibrate_tangent, mean_abs_error, CalibrationGrid, LinearGrid,
    ParamRange, TangentCalibration, TangentGrid,
};
pub use loocv::{evaluate_loocv, AxisStats, FoldResult, LoocvReport};
pub use offset::{apply_offset, OffsetModel, TangentParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{filter_outliers_local, neighbor_average, SavitzkyGolay, SignalError};
use crate::trace::{group_scans, Axis, Gaze, GazeSample, MetricPolarity, ScanWindow, SessionLog, TraceError};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("tangent argument {argument:.3}° on axis {axis} is outside (-90°, 90°)")]
    TangentDomain { axis: Axis, argument: f64 },
    #[error("scan window has no ground-truth gaze")]
    MissingGroundTruth,
    #[error("no scans with ground truth on axis {0}")]
    NoScans(Axis),
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("invalid grid range: {0}")]
    InvalidGrid(String),
    #[error("need at least two groups for leave-one-out, got {0}")]
    FewerThanTwoGroups(usize),
    #[error("no tangent candidate is valid on axis {0}")]
    NoValidCandidate(Axis),
}

/// Per-scan conditioning before the extremum search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    /// Half-width of the moving average applied after SG; 0 disables it.
    pub neighbor_avg: usize,
    pub outlier_filter: bool,
    /// Threshold in (normal-scaled) MADs.
    pub outlier_threshold: f64,
    /// Half-width of the sliding median window; 0 judges each sample
    /// against the whole scan window.
    pub outlier_half_width: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            sg_window: 27,
            sg_order: 2,
            neighbor_avg: 0,
            outlier_filter: false,
            outlier_threshold: 3.0,
            outlier_half_width: 0,
        }
    }
}

/// Conditions one window's metric series: optional outlier replacement,
/// SG smoothing, then the neighbour average.
#[derive(Debug, Clone)]
pub struct Smoother {
    config: SmoothingConfig,
    sg: SavitzkyGolay,
}

impl Smoother {
    pub fn new(config: &SmoothingConfig) -> Result<Self, InferenceError> {
        Ok(Smoother {
            sg: SavitzkyGolay::new(config.sg_window, config.sg_order)?,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &SmoothingConfig {
        &self.config
    }

    pub fn apply(&self, metrics: &[f64]) -> Result<Vec<f64>, InferenceError> {
        let filtered = if self.config.outlier_filter {
            filter_outliers_local(metrics, self.config.outlier_threshold, self.config.outlier_half_width)?
        } else {
            metrics.to_vec()
        };
        let smoothed = self.sg.apply(&filtered)?;
        Ok(neighbor_average(&smoothed, self.config.neighbor_avg)?)
    }
}

/// Extremum of a smoothed window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub t: f64,
    pub theta: f64,
}

/// Argmax for frame-time-like metrics, argmin for frame-rate-like ones;
/// ties go to the earliest frame.
pub fn locate_extremum(window: &ScanWindow<'_>, smoothed: &[f64], polarity: MetricPolarity) -> Extremum {
    assert_eq!(window.n_w(), smoothed.len(), "smoothed series must match the window");
    let mut best = 0;
    for (j, v) in smoothed.iter().enumerate().skip(1) {
        let better = match polarity {
            MetricPolarity::LoadIncreasesMetric => *v > smoothed[best],
            MetricPolarity::LoadDecreasesMetric => *v < smoothed[best],
        };
        if better {
            best = j;
        }
    }
    let f = &window.frames[best];
    Extremum {
        index: best,
        t: f.t,
        theta: f.hco_angle,
    }
}

/// Ground truth for one axis: the gaze component at the frame where the HCO
/// passes closest to it (earliest on ties).
pub fn per_axis_ground_truth(window: &ScanWindow<'_>) -> Result<f64, InferenceError> {
    let mut best: Option<(f64, f64)> = None;
    for f in window.frames {
        let g = f.gt_gaze.ok_or(InferenceError::MissingGroundTruth)?.component(window.axis);
        let d = (f.hco_angle - g).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, g));
        }
    }
    best.map(|(_, g)| g).ok_or(InferenceError::MissingGroundTruth)
}

/// One scan's estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanEstimate {
    pub scan_id: u64,
    pub axis: Axis,
    /// Position of the window in the grouped log.
    pub window_index: usize,
    pub t: f64,
    /// HCO angle at the extremum; also the `theta` of the linear model.
    pub p_initial: f64,
    pub p_final: f64,
    /// Per-axis ground truth, when the log carries it.
    pub gt: Option<f64>,
    /// Frames in the window.
    pub frames: usize,
}

impl ScanEstimate {
    pub fn error(&self) -> Option<f64> {
        self.gt.map(|g| self.p_final - g)
    }
}

/// A paired X/Y sample with its per-axis ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSample {
    pub sample: GazeSample,
    pub gt: Option<Gaze>,
}

impl PairedSample {
    pub fn abs_error(&self) -> Option<(f64, f64)> {
        self.gt
            .map(|g| ((self.sample.x - g.x).abs(), (self.sample.y - g.y).abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InferenceOutput {
    pub estimates: Vec<ScanEstimate>,
    pub samples: Vec<PairedSample>,
    /// Scan ids skipped because the window was shorter than the SG window.
    pub short_windows: Vec<u64>,
    /// Scan ids skipped because the offset model was undefined there.
    pub domain_skipped: Vec<u64>,
    pub windows: usize,
}

/// Field of view used to clamp final samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub x: f64,
    pub y: f64,
}

/// Runs the whole per-scan pipeline over a log.
pub fn run_inference(
    log: &SessionLog,
    smoothing: &SmoothingConfig,
    model: &OffsetModel,
    fov: Fov,
) -> Result<InferenceOutput, InferenceError> {
    let smoother = Smoother::new(smoothing)?;
    let windows = group_scans(log)?;
    let mut out = InferenceOutput {
        windows: windows.len(),
        ..InferenceOutput::default()
    };
    let mut by_window: Vec<Option<ScanEstimate>> = vec![None; windows.len()];
    for (wi, w) in windows.iter().enumerate() {
        if w.n_w() < smoothing.sg_window {
            log::warn!(
                "scan {} has {} frames, fewer than the SG window {}; dropped",
                w.scan_id,
                w.n_w(),
                smoothing.sg_window
            );
            out.short_windows.push(w.scan_id);
            continue;
        }
        let smoothed = smoother.apply(&w.metrics())?;
        let ext = locate_extremum(w, &smoothed, log.polarity());
        let p_final = match apply_offset(ext.theta, ext.theta, w.axis, model) {
            Ok(p) => p,
            Err(InferenceError::TangentDomain { .. }) => {
                out.domain_skipped.push(w.scan_id);
                continue;
            }
            Err(e) => return Err(e),
        };
        let gt = if w.frames.iter().all(|f| f.gt_gaze.is_some()) {
            Some(per_axis_ground_truth(w)?)
        } else {
            None
        };
        let est = ScanEstimate {
            scan_id: w.scan_id,
            axis: w.axis,
            window_index: wi,
            t: ext.t,
            p_initial: ext.theta,
            p_final,
            gt,
            frames: w.n_w(),
        };
        by_window[wi] = Some(est);
        out.estimates.push(est);
    }
    for pair in by_window.chunks_exact(2) {
        if let [Some(xs), Some(ys)] = pair {
            let sample = GazeSample::clamped(0.5 * (xs.t + ys.t), xs.p_final, ys.p_final, fov.x, fov.y);
            let gt = match (xs.gt, ys.gt) {
                (Some(gx), Some(gy)) => Some(Gaze::new(gx, gy)),
                _ => None,
            };
            out.samples.push(PairedSample { sample, gt });
        }
    }
    Ok(out)
}

/// Time-stamped gaze samples for a log (the pairing output of
/// [`run_inference`]).
pub fn infer_gaze(
    log: &SessionLog,
    smoothing: &SmoothingConfig,
    model: &OffsetModel,
    fov: Fov,
) -> Result<Vec<GazeSample>, InferenceError> {
    Ok(run_inference(log, smoothing, model, fov)?
        .samples
        .into_iter()
        .map(|p| p.sample)
        .collect())
}
