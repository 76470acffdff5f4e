//! Leave-one-group-out evaluation of an offset calibrator.

use super::{apply_offset, InferenceError, OffsetModel, ScanEstimate};
use crate::trace::Axis;

/// Mean and sample SD of absolute errors on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl AxisStats {
    pub fn from_errors(abs_errors: &[f64]) -> Self {
        let n = abs_errors.len();
        if n == 0 {
            return AxisStats::default();
        }
        let mean = abs_errors.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (abs_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        AxisStats { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// Index of the held-out group.
    pub held_out: usize,
    pub model: OffsetModel,
    pub x: AxisStats,
    pub y: AxisStats,
    /// Held-out scans where the model was undefined.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    /// Fold-averaged means and SDs.
    pub mean_x: AxisStats,
    pub mean_y: AxisStats,
}

/// Calibrates on all groups but one and measures absolute per-axis error on
/// the held-out group, for every group in turn.
pub fn evaluate_loocv<F>(groups: &[Vec<ScanEstimate>], calibrator: F) -> Result<LoocvReport, InferenceError>
where
    F: Fn(&[ScanEstimate]) -> Result<OffsetModel, InferenceError>,
{
    if groups.len() < 2 {
        return Err(InferenceError::FewerThanTwoGroups(groups.len()));
    }
    let mut folds = Vec::with_capacity(groups.len());
    for held_out in 0..groups.len() {
        let train: Vec<ScanEstimate> = groups
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .flat_map(|(_, g)| g.iter().copied())
            .collect();
        let model = calibrator(&train)?;
        let mut errs = [Vec::new(), Vec::new()];
        let mut skipped = 0;
        for e in &groups[held_out] {
            let Some(gt) = e.gt else { continue };
            match apply_offset(e.p_initial, e.p_initial, e.axis, &model) {
                Ok(p) => errs[(e.axis == Axis::Y) as usize].push((p - gt).abs()),
                Err(InferenceError::TangentDomain { .. }) => skipped += 1,
                Err(err) => return Err(err),
            }
        }
        folds.push(FoldResult {
            held_out,
            model,
            x: AxisStats::from_errors(&errs[0]),
            y: AxisStats::from_errors(&errs[1]),
            skipped,
        });
    }
    let avg = |f: fn(&FoldResult) -> AxisStats| {
        let n = folds.len() as f64;
        AxisStats {
            mean: folds.iter().map(|r| f(r).mean).sum::<f64>() / n,
            sd: folds.iter().map(|r| f(r).sd).sum::<f64>() / n,
            n: folds.iter().map(|r| f(r).n).sum(),
        }
    };
    let mean_x = avg(|r| r.x);
    let mean_y = avg(|r| r.y);
    Ok(LoocvReport { folds, mean_x, mean_y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::calibrate_constant;

    fn group(bias_x: f64, bias_y: f64) -> Vec<ScanEstimate> {
        (0..10)
            .flat_map(|i| {
                let g = i as f64 - 4.5;
                [(Axis::X, bias_x), (Axis::Y, bias_y)].map(|(axis, b)| ScanEstimate {
                    scan_id: i,
                    axis,
                    window_index: 0,
                    t: 0.0,
                    p_initial: g + b,
                    p_final: g + b,
                    gt: Some(g),
                    frames: 40,
                })
            })
            .collect()
    }

    #[test]
    fn identical_groups_give_equal_folds() {
        let groups = vec![group(3.0, 1.0), group(3.0, 1.0)];
        let rep = evaluate_loocv(&groups, calibrate_constant).unwrap();
        assert_eq!(rep.folds[0].x, rep.folds[1].x);
        assert!(rep.mean_x.mean < 1e-12);
    }

    #[test]
    fn residual_bias_matches_mean_offset_algebra() {
        // held-out error = |b_i - mean of the other biases|
        let biases = [2.0, 4.0, 9.0];
        let groups: Vec<_> = biases.iter().map(|&b| group(b, -b)).collect();
        let rep = evaluate_loocv(&groups, calibrate_constant).unwrap();
        for (i, fold) in rep.folds.iter().enumerate() {
            let others: f64 = biases.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b).sum();
            let expect = (biases[i] - others / 2.0).abs();
            assert!((fold.x.mean - expect).abs() < 1e-12);
            assert!((fold.y.mean - expect).abs() < 1e-12);
            assert!(fold.x.sd < 1e-12);
        }
        assert_eq!(
            evaluate_loocv(&groups[..1], calibrate_constant),
            Err(InferenceError::FewerThanTwoGroups(1))
        );
    }
}
