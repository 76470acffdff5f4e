//! Offset calibration against per-axis ground truth: mean bias, exhaustive
//! linear grid search and the two-stage tangent search.
//!
//! Grid ties resolve to the smallest parameter values (first parameter
//! first), so results do not depend on evaluation order.

use serde::{Deserialize, Serialize};

use super::{InferenceError, OffsetModel, ScanEstimate, TangentParams};
use crate::trace::Axis;

/// Inclusive `min..=max` range sampled every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamRange {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        ParamRange { min, max, step }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.min <= self.max) || !(self.step > 0.0) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(InferenceError::InvalidGrid(format!(
                "need min <= max and step > 0, got [{}, {}] step {}",
                self.min, self.max, self.step
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values, snapped to 1e-9 so decimal steps land on their literals.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

/// Search space for the linear model, shared by both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearGrid {
    pub a: ParamRange,
    pub b: ParamRange,
}

impl Default for LinearGrid {
    fn default() -> Self {
        LinearGrid {
            a: ParamRange::new(-1.0, 1.0, 0.01),
            b: ParamRange::new(-15.0, 15.0, 0.1),
        }
    }
}

/// Search space for the tangent model: `c` in stage one, `(a, k)` jointly in
/// stage two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TangentGrid {
    pub c: ParamRange,
    pub a: ParamRange,
    pub k: ParamRange,
}

impl Default for TangentGrid {
    fn default() -> Self {
        TangentGrid {
            c: ParamRange::new(15.0, 30.0, 0.1),
            a: ParamRange::new(10.0, 40.0, 0.2),
            k: ParamRange::new(1.0, 4.0, 0.2),
        }
    }
}

impl TangentGrid {
    /// Candidates evaluated per axis in (stage one, stage two).
    pub fn candidate_counts(&self) -> (usize, usize) {
        (self.c.len(), self.a.len() * self.k.len())
    }
}

/// Any of the calibration grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CalibrationGrid {
    Linear(LinearGrid),
    Tangent(TangentGrid),
}

/// Per-axis `(p_initial, gt)` pairs.
fn axis_points(estimates: &[ScanEstimate], axis: Axis) -> Result<Vec<(f64, f64)>, InferenceError> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| e.axis == axis)
        .filter_map(|e| e.gt.map(|g| (e.p_initial, g)))
        .collect();
    if pts.is_empty() {
        return Err(InferenceError::NoScans(axis));
    }
    Ok(pts)
}

/// Mean absolute error of a correction over `(p_initial, gt)` pairs, or
/// `None` if the correction is undefined at any point.
fn mae_of<F: Fn(f64) -> Option<f64>>(pts: &[(f64, f64)], correct: F) -> Option<f64> {
    let mut sum = 0.0;
    for &(p, g) in pts {
        sum += (correct(p)? - g).abs();
    }
    Some(sum / pts.len() as f64)
}

/// Mean absolute error of `model` over the scans of `axis` that carry
/// ground truth. Scans where the model is undefined are skipped.
pub fn mean_abs_error(estimates: &[ScanEstimate], axis: Axis, model: &OffsetModel) -> Option<f64> {
    let errs: Vec<f64> = estimates
        .iter()
        .filter(|e| e.axis == axis)
        .filter_map(|e| {
            let g = e.gt?;
            super::apply_offset(e.p_initial, e.p_initial, axis, model)
                .ok()
                .map(|p| (p - g).abs())
        })
        .collect();
    if errs.is_empty() {
        None
    } else {
        Some(errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

/// Constant offsets: the mean of `p_initial - gt` per axis.
pub fn calibrate_constant(estimates: &[ScanEstimate]) -> Result<OffsetModel, InferenceError> {
    let bias = |axis| -> Result<f64, InferenceError> {
        let pts = axis_points(estimates, axis)?;
        Ok(pts.iter().map(|(p, g)| p - g).sum::<f64>() / pts.len() as f64)
    };
    Ok(OffsetModel::Constant {
        dx: bias(Axis::X)?,
        dy: bias(Axis::Y)?,
    })
}

fn linear_axis(pts: &[(f64, f64)], grid: &LinearGrid) -> (f64, f64, f64) {
    let a_values = grid.a.values();
    let b_values = grid.b.values();
    let mut best = (f64::INFINITY, a_values[0], b_values[0]);
    for &a in &a_values {
        for &b in &b_values {
            let mae = mae_of(pts, |p| Some(p - (a * p + b))).expect("linear model is total");
            if mae < best.0 {
                best = (mae, a, b);
            }
        }
    }
    best
}

/// Exhaustive `(a, b)` search per axis minimising the mean absolute error.
/// Returns the model and the per-axis objective `(x, y)`.
pub fn calibrate_linear(
    estimates: &[ScanEstimate],
    grid: &LinearGrid,
) -> Result<(OffsetModel, (f64, f64)), InferenceError> {
    grid.a.validate()?;
    grid.b.validate()?;
    let (mx, a_x, b_x) = linear_axis(&axis_points(estimates, Axis::X)?, grid);
    let (my, a_y, b_y) = linear_axis(&axis_points(estimates, Axis::Y)?, grid);
    Ok((OffsetModel::Linear { a_x, b_x, a_y, b_y }, (mx, my)))
}

/// Result of the two-stage tangent search on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentAxisFit {
    pub params: TangentParams,
    /// Best objective of stage one (A = K = 0).
    pub stage1_objective: f64,
    /// Objective of the returned parameters.
    pub objective: f64,
    /// Stage-two candidates skipped for leaving the tangent domain.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentCalibration {
    pub x: TangentAxisFit,
    pub y: TangentAxisFit,
}

impl TangentCalibration {
    pub fn model(&self) -> OffsetModel {
        OffsetModel::Tangent {
            x: self.x.params,
            y: self.y.params,
        }
    }
}

fn tangent_axis(pts: &[(f64, f64)], grid: &TangentGrid, axis: Axis) -> Result<TangentAxisFit, InferenceError> {
    // stage one: A = K = 0, so P_f = P_i - C
    let mut c_best = (f64::INFINITY, 0.0);
    for c in grid.c.values() {
        let mae = mae_of(pts, |p| Some(p - c)).expect("total");
        if mae < c_best.0 {
            c_best = (mae, c);
        }
    }
    let (stage1, c) = c_best;

    // stage two: joint (A, K) with C fixed
    let mut best: Option<(f64, f64, f64)> = None;
    let mut skipped = 0;
    let k_values = grid.k.values();
    for a in grid.a.values() {
        for &k in &k_values {
            let params = TangentParams { c, a, k };
            match mae_of(pts, |p| params.correct(p).ok()) {
                Some(mae) if best.is_none_or(|(m, _, _)| mae < m) => best = Some((mae, a, k)),
                Some(_) => {}
                None => skipped += 1,
            }
        }
    }
    let (objective, a, k) = best.ok_or(InferenceError::NoValidCandidate(axis))?;
    Ok(TangentAxisFit {
        params: TangentParams { c, a, k },
        stage1_objective: stage1,
        objective,
        skipped,
    })
}

/// Two-stage tangent search per axis: best `C` with `A = K = 0`, then the
/// best `(A, K)` pair with that `C` fixed. Candidates whose tangent argument
/// leaves (-90°, 90°) on any scan are skipped and counted.
pub fn calibrate_tangent(estimates: &[ScanEstimate], grid: &TangentGrid) -> Result<TangentCalibration, InferenceError> {
    for r in [grid.c, grid.a, grid.k] {
        r.validate()?;
    }
    Ok(TangentCalibration {
        x: tangent_axis(&axis_points(estimates, Axis::X)?, grid, Axis::X)?,
        y: tangent_axis(&axis_points(estimates, Axis::Y)?, grid, Axis::Y)?,
    })
}
