use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::signal::{quantile_sorted, smooth_sg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Window length in seconds.
    pub window_len: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    /// Half-width of the outlier band as a fraction of the window mean.
    pub outlier_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_len: 1.0,
            sg_window: 15,
            sg_order: 5,
            outlier_threshold: 0.02,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.window_len > 0.0) || !(self.outlier_threshold > 0.0) {
            return Err(DetectorError::InvalidConfig(
                "window_len and outlier_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Dispersion and shape summaries of one smoothed metric window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub sd: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    pub range: f64,
    pub iqr: f64,
    pub outlier_prop: f64,
}

/// Which features a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// `{sd, outlier_prop}`.
    #[default]
    SdOutlier,
    All,
}

impl FeatureSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::SdOutlier => &["sd", "outlier_prop"],
            FeatureSet::All => &["sd", "skewness", "kurtosis", "range", "iqr", "outlier_prop"],
        }
    }

    /// Column of `sd` and `outlier_prop` in the selected vector.
    pub fn sd_index(self) -> usize {
        0
    }

    pub fn outlier_index(self) -> usize {
        match self {
            FeatureSet::SdOutlier => 1,
            FeatureSet::All => 5,
        }
    }
}

impl WindowFeatures {
    pub fn select(&self, set: FeatureSet) -> Vec<f64> {
        match set {
            FeatureSet::SdOutlier => vec![self.sd, self.outlier_prop],
            FeatureSet::All => vec![
                self.sd,
                self.skewness,
                self.kurtosis,
                self.range,
                self.iqr,
                self.outlier_prop,
            ],
        }
    }
}

/// Smooths the window with SG and summarises it. Moments are population
/// moments; skewness and kurtosis are zero for a constant window. When the
/// mean is within 1e-9 of zero the outlier band becomes `threshold * sd`
/// around the mean.
pub fn extract_features(window: &[f64], config: &DetectorConfig) -> Result<WindowFeatures, DetectorError> {
    if window.len() < config.sg_window {
        return Err(DetectorError::WindowTooShort {
            len: window.len(),
            min: config.sg_window,
        });
    }
    let s = smooth_sg(window, config.sg_window, config.sg_order)?;
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let range = sorted[sorted.len() - 1] - sorted[0];
    if range == 0.0 {
        return Ok(WindowFeatures::default());
    }
    let mean = s.iter().sum::<f64>() / n;
    let m2 = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = s.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = s.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let sd = m2.sqrt();
    let (skewness, kurtosis) = if sd > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let band = if mean.abs() < 1e-9 {
        config.outlier_threshold * sd
    } else {
        config.outlier_threshold * mean.abs()
    };
    let outliers = s.iter().filter(|v| (*v - mean).abs() > band).count();
    Ok(WindowFeatures {
        sd,
        skewness,
        kurtosis,
        range,
        iqr,
        outlier_prop: outliers as f64 / n,
    })
}
