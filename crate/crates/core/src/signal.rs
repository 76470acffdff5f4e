//! Per-scan signal conditioning: MAD outlier replacement, Savitzky-Golay
//! smoothing and a centred neighbour average. Also the order statistics the
//! detector features share.

use nalgebra::DMatrix;
use thiserror::Error;

/// Scale that makes the MAD a consistent estimator of the standard
/// deviation under Gaussian noise.
pub const MAD_NORMAL_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("series of length {len} is shorter than the smoothing window {window}")]
    SeriesShorterThanWindow { len: usize, window: usize },
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("polynomial order {order} must be below the window length {window}")]
    OrderTooHigh { order: usize, window: usize },
    #[error("series is empty")]
    Empty,
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics
/// (position `(n - 1) * q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Replaces samples farther than `threshold` scaled MADs from the median by
/// the median. A zero MAD flags every sample that differs from the median;
/// an infinite threshold leaves the series untouched.
pub fn filter_outliers(series: &[f64], threshold: f64) -> Result<Vec<f64>, SignalError> {
    if series.len() < 3 {
        return Err(SignalError::TooShort {
            len: series.len(),
            min: 3,
        });
    }
    if threshold.is_infinite() {
        return Ok(series.to_vec());
    }
    let med = median(series);
    let deviations: Vec<f64> = series.iter().map(|v| (v - med).abs()).collect();
    let mad = MAD_NORMAL_SCALE * median(&deviations);
    let limit = threshold * mad;
    Ok(series
        .iter()
        .zip(&deviations)
        .map(|(&v, &d)| if d > limit { med } else { v })
        .collect())
}

/// Sliding-window (Hampel) variant of [`filter_outliers`]: each sample is
/// judged against the median and scaled MAD of the samples within
/// `half_width` of it, and replaced by that local median when flagged. A
/// broad response survives because its neighbours move with it; isolated
/// spikes do not.
pub fn filter_outliers_local(series: &[f64], threshold: f64, half_width: usize) -> Result<Vec<f64>, SignalError> {
    if half_width == 0 {
        return filter_outliers(series, threshold);
    }
    if series.len() < 3 {
        return Err(SignalError::TooShort {
            len: series.len(),
            min: 3,
        });
    }
    if threshold.is_infinite() {
        return Ok(series.to_vec());
    }
    let n = series.len();
    let mut out = Vec::with_capacity(n);
    let mut dev = Vec::with_capacity(2 * half_width + 1);
    for (i, &v) in series.iter().enumerate() {
        let local = &series[i.saturating_sub(half_width)..(i + half_width + 1).min(n)];
        let med = median(local);
        dev.clear();
        dev.extend(local.iter().map(|x| (x - med).abs()));
        let mad = MAD_NORMAL_SCALE * median(&dev);
        out.push(if (v - med).abs() > threshold * mad { med } else { v });
    }
    Ok(out)
}

/// Convolution weights for a Savitzky-Golay fit of `order` over `window`
/// samples. Row `r` evaluates the fitted polynomial at window position `r`,
/// so row `window / 2` is the usual centre filter and the other rows serve
/// the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SavitzkyGolay {
    window: usize,
    order: usize,
    rows: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self, SignalError> {
        if window.is_multiple_of(2) {
            return Err(SignalError::EvenWindow(window));
        }
        if order >= window {
            return Err(SignalError::OrderTooHigh { order, window });
        }
        let half = window / 2;
        // positions scaled into [-1, 1] keep the normal matrix well conditioned
        let scale = half.max(1) as f64;
        let pos = |j: usize| (j as f64 - half as f64) / scale;
        let vander = DMatrix::from_fn(window, order + 1, |j, i| pos(j).powi(i as i32));
        let pinv = vander
            .svd(true, true)
            .pseudo_inverse(1e-13)
            .expect("SVD with both factors computed");
        let rows = (0..window)
            .map(|r| {
                let basis: Vec<f64> = (0..=order).map(|i| pos(r).powi(i as i32)).collect();
                (0..window)
                    .map(|j| (0..=order).map(|i| basis[i] * pinv[(i, j)]).sum())
                    .collect()
            })
            .collect();
        Ok(SavitzkyGolay {
            window,
            order,
            rows,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Smooths `series`. Every point takes the value, at its own position, of
    /// the least-squares polynomial fitted to the full window nearest to it:
    /// the centred window in the interior and the first/last window at the
    /// edges. Polynomials of degree <= order pass through unchanged.
    pub fn apply(&self, series: &[f64]) -> Result<Vec<f64>, SignalError> {
        let n = series.len();
        if n < self.window {
            return Err(SignalError::SeriesShorterThanWindow {
                len: n,
                window: self.window,
            });
        }
        let half = self.window / 2;
        Ok((0..n)
            .map(|i| {
                let start = i.saturating_sub(half).min(n - self.window);
                let row = &self.rows[i - start];
                let anchor = series[i];
                // weights sum to one, so anchoring at x_i is exact and keeps
                // constant runs bit-identical
                anchor
                    + row
                        .iter()
                        .zip(&series[start..start + self.window])
                        .map(|(c, x)| c * (x - anchor))
                        .sum::<f64>()
            })
            .collect())
    }
}

pub fn smooth_sg(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>, SignalError> {
    SavitzkyGolay::new(window, order)?.apply(series)
}

/// `out[i]` is the mean of `series[i-h ..= i+h]`, truncated at the ends.
pub fn neighbor_average(series: &[f64], half_width: usize) -> Result<Vec<f64>, SignalError> {
    if series.is_empty() {
        return Err(SignalError::Empty);
    }
    if half_width == 0 {
        return Ok(series.to_vec());
    }
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}
