//! Scan-attack detection from windowed metric statistics: feature
//! extraction, a logistic classifier, 2-means clustering and F1 scoring.

mod features;
mod kmeans;
mod logistic;

pub use features::{extract_features, DetectorConfig, FeatureSet, WindowFeatures};
pub use kmeans::{fit_kmeans, kmeans, KMeansFit, KMeansModel};
pub use logistic::{fit_logistic, train_logistic, LogisticConfig, LogisticFit, LogisticModel, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::SignalError;
use crate::trace::SessionLog;

pub const FEATURES_HEADER: [&str; 9] = [
    "window_start_s",
    "window_len_s",
    "sd",
    "skew",
    "kurtosis",
    "range",
    "iqr",
    "outlier_prop",
    "label",
];

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("window of {len} samples is shorter than the smoothing window ({min})")]
    WindowTooShort { len: usize, min: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least {k} distinct points for k-means, got {distinct}")]
    DegenerateData { k: usize, distinct: usize },
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DetectionMetrics {
    /// F1 is only meaningful when the labels contain a positive.
    pub fn f1_defined(&self) -> bool {
        self.tp + self.fn_ > 0
    }
}

/// Confusion-matrix scores. Zero denominators give 0, except that precision
/// is 1 when there are neither positive predictions nor positive labels.
pub fn evaluate_detector(predictions: &[bool], labels: &[bool]) -> Result<DetectionMetrics, DetectorError> {
    if predictions.len() != labels.len() {
        return Err(DetectorError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut m = DetectionMetrics::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    m.precision = if m.tp + m.fp == 0 && m.tp + m.fn_ == 0 {
        1.0
    } else {
        ratio(m.tp, m.tp + m.fp)
    };
    m.recall = ratio(m.tp, m.tp + m.fn_);
    m.f1 = if m.precision + m.recall == 0.0 || !m.f1_defined() {
        0.0
    } else {
        2.0 * m.precision * m.recall / (m.precision + m.recall)
    };
    Ok(m)
}

/// A fixed-length slice of a session log.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub start: f64,
    pub len: f64,
    pub metrics: Vec<f64>,
    /// Fraction of the window during which an HCO was moving.
    pub motion_fraction: f64,
    pub label: bool,
}

/// Cuts a log into consecutive non-overlapping windows of `window_len`
/// seconds from its first frame; a trailing partial window is dropped. The
/// HCO counts as moving between two frames of the same scan whose angles
/// differ. A window is positive when motion covers at least half of it.
pub fn slice_windows(log: &SessionLog, window_len: f64) -> Vec<LabeledWindow> {
    let recs = log.records();
    if recs.is_empty() || !(window_len > 0.0) {
        return Vec::new();
    }
    let motion: Vec<(f64, f64)> = recs
        .windows(2)
        .filter(|p| p[0].scan_id == p[1].scan_id && p[0].hco_angle != p[1].hco_angle)
        .map(|p| (p[0].t, p[1].t))
        .collect();
    let t0 = recs[0].t;
    let t_end = recs[recs.len() - 1].t;
    let mut out = Vec::new();
    let mut frame = 0;
    let mut seg = 0;
    let mut i = 0usize;
    loop {
        let start = t0 + i as f64 * window_len;
        let end = t0 + (i + 1) as f64 * window_len;
        if end > t_end {
            break;
        }
        while frame < recs.len() && recs[frame].t < start {
            frame += 1;
        }
        let first = frame;
        while frame < recs.len() && recs[frame].t < end {
            frame += 1;
        }
        let metrics = recs[first..frame].iter().map(|r| r.metric).collect();
        while seg < motion.len() && motion[seg].1 <= start {
            seg += 1;
        }
        let moving: f64 = motion[seg..]
            .iter()
            .take_while(|(a, _)| *a < end)
            .map(|(a, b)| (b.min(end) - a.max(start)).max(0.0))
            .sum();
        let motion_fraction = (moving / window_len).min(1.0);
        out.push(LabeledWindow {
            start,
            len: window_len,
            metrics,
            motion_fraction,
            label: motion_fraction >= 0.5,
        });
        i += 1;
    }
    out
}

/// Features of one window together with its position and label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub start: f64,
    pub len: f64,
    pub features: WindowFeatures,
    pub label: bool,
}

/// Slices every log and extracts features, skipping windows with fewer
/// samples than the smoothing window. Returns the rows and the number of
/// windows skipped.
pub fn feature_rows(logs: &[SessionLog], config: &DetectorConfig) -> Result<(Vec<FeatureRow>, usize), DetectorError> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for log in logs {
        for w in slice_windows(log, config.window_len) {
            match extract_features(&w.metrics, config) {
                Ok(features) => rows.push(FeatureRow {
                    start: w.start,
                    len: w.len,
                    features,
                    label: w.label,
                }),
                Err(DetectorError::WindowTooShort { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((rows, skipped))
}

/// One row of the window-length study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub window_len: f64,
    pub windows: usize,
    pub positives: usize,
    pub metrics: Option<DetectionMetrics>,
    /// Why `metrics` is absent or F1 is undefined.
    pub note: Option<String>,
}

impl StudyRow {
    pub fn f1(&self) -> Option<f64> {
        self.metrics.filter(|m| m.f1_defined()).map(|m| m.f1)
    }
}

/// Runs the unsupervised detector on the windows of every length and scores
/// it against the motion labels.
pub fn window_length_study(
    logs: &[SessionLog],
    lengths: &[f64],
    config: &DetectorConfig,
    features: FeatureSet,
    seed: u64,
) -> Result<Vec<StudyRow>, DetectorError> {
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let cfg = DetectorConfig {
            window_len: len,
            ..config.clone()
        };
        let (rows, _) = feature_rows(logs, &cfg)?;
        let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
        let positives = labels.iter().filter(|&&l| l).count();
        let mut row = StudyRow {
            window_len: len,
            windows: rows.len(),
            positives,
            metrics: None,
            note: None,
        };
        if rows.is_empty() {
            row.note = Some("no window holds enough samples to smooth".into());
            out.push(row);
            continue;
        }
        let feats: Vec<WindowFeatures> = rows.iter().map(|r| r.features).collect();
        match fit_kmeans(&feats, features, seed) {
            Ok(model) => {
                let pred: Vec<bool> = feats.iter().map(|f| model.predict(f)).collect();
                let m = evaluate_detector(&pred, &labels)?;
                if !m.f1_defined() {
                    row.note = Some("no positive windows; F1 undefined".into());
                }
                row.metrics = Some(m);
            }
            Err(DetectorError::DegenerateData { distinct, .. }) => {
                row.note = Some(format!("only {distinct} distinct window(s); skipped"));
            }
            Err(e) => return Err(e),
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{validate_log, Axis, FrameRecord, MetricPolarity};

    #[test]
    fn metric_conventions() {
        let all = evaluate_detector(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!(all.f1, 1.0);

        let mut pred = vec![true; 10];
        let mut lab = vec![true; 10];
        pred[9] = false;
        lab[0] = false;
        pred.push(false);
        lab.push(false);
        let m = evaluate_detector(&pred, &lab).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (8, 1, 1));

        let m = evaluate_detector(&[false, false], &[true, false]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));

        let m = evaluate_detector(&[false, false], &[false, false]).unwrap();
        assert_eq!(m.precision, 1.0);
        assert!(!m.f1_defined());

        assert_eq!(
            evaluate_detector(&[true], &[]),
            Err(DetectorError::LengthMismatch { predictions: 1, labels: 0 })
        );
    }

    #[test]
    fn nine_of_ten() {
        let mut pred = vec![true; 10];
        let mut lab = vec![true; 10];
        pred.push(false); // FN
        lab.push(true);
        lab[0] = false; // FP
        pred.push(false);
        lab.push(false);
        let m = evaluate_detector(&pred, &lab).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (9, 1, 1));
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.f1 - 0.9).abs() < 1e-12);
    }

    fn log_with_motion(n: usize, moving_from: usize) -> SessionLog {
        let recs = (0..n)
            .map(|k| FrameRecord {
                t: k as f64 * 0.01,
                metric: 10.0,
                hco_angle: if k >= moving_from { k as f64 } else { 0.0 },
                axis: Axis::X,
                scan_id: 1,
                gt_gaze: None,
            })
            .collect();
        validate_log(recs, MetricPolarity::LoadIncreasesMetric).unwrap()
    }

    #[test]
    fn windows_label_by_motion_share() {
        let log = log_with_motion(101, 31);
        let w = slice_windows(&log, 0.2);
        assert_eq!(w.len(), 5);
        assert_eq!(w[0].metrics.len(), 20);
        assert!(!w[0].label);
        assert!((w[1].motion_fraction - 0.5).abs() < 1e-9);
        assert!(w[2].label);
        assert!(slice_windows(&log, 5.0).is_empty());
    }
}
