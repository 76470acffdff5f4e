use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::column_scaling;
use super::{evaluate_detector, DetectionMetrics, DetectorError, FeatureSet, WindowFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub features: FeatureSet,
    pub l2: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Loss weights for (negative, positive) samples.
    pub class_weights: Option<(f64, f64)>,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            features: FeatureSet::SdOutlier,
            l2: 1e-3,
            train_fraction: 0.7,
            seed: 0,
            class_weights: None,
            max_iter: 10_000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub features: FeatureSet,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl LogisticModel {
    pub fn probability_raw(&self, x: &[f64]) -> f64 {
        let z: f64 = x
            .iter()
            .zip(&self.weights)
            .zip(self.means.iter().zip(&self.scales))
            .map(|((v, w), (m, s))| w * (v - m) / s)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    pub fn probability(&self, f: &WindowFeatures) -> f64 {
        self.probability_raw(&f.select(self.features))
    }

    pub fn predict(&self, f: &WindowFeatures) -> bool {
        self.probability(f) >= 0.5
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Gradient-descent trace of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Regularized loss before the first step and after every step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    z: &'a [Vec<f64>],
    y: &'a [bool],
    w: Vec<f64>,
    l2: f64,
}

impl Problem<'_> {
    /// Weighted mean log-loss plus `l2 / 2 * |w|^2` (bias unpenalized).
    fn loss(&self, params: &[f64]) -> f64 {
        let (b, wts) = params.split_last().expect("bias present");
        let total: f64 = self.w.iter().sum();
        let mut l = 0.0;
        for ((x, &y), sw) in self.z.iter().zip(self.y).zip(&self.w) {
            let s: f64 = x.iter().zip(wts).map(|(a, c)| a * c).sum::<f64>() + b;
            l += sw * if y { softplus(-s) } else { softplus(s) };
        }
        l / total + 0.5 * self.l2 * wts.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let (b, wts) = params.split_last().expect("bias present");
        let total: f64 = self.w.iter().sum();
        let mut g = vec![0.0; params.len()];
        for ((x, &y), sw) in self.z.iter().zip(self.y).zip(&self.w) {
            let s: f64 = x.iter().zip(wts).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = sw * (sigmoid(s) - if y { 1.0 } else { 0.0 }) / total;
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
            *g.last_mut().expect("bias slot") += r;
        }
        for (gj, wj) in g.iter_mut().zip(wts) {
            *gj += self.l2 * wj;
        }
        g
    }
}

/// Fits an L2-regularized logistic regression on standardized columns by
/// full-batch gradient descent with Armijo backtracking.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], features: FeatureSet, config: &LogisticConfig) -> Result<LogisticFit, DetectorError> {
    if x.len() != y.len() {
        return Err(DetectorError::LengthMismatch {
            predictions: x.len(),
            labels: y.len(),
        });
    }
    if !(y.iter().any(|&l| l) && y.iter().any(|&l| !l)) {
        return Err(DetectorError::SingleClass);
    }
    let (means, scales) = column_scaling(x);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(means.iter().zip(&scales)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let (w_neg, w_pos) = config.class_weights.unwrap_or((1.0, 1.0));
    let prob = Problem {
        z: &z,
        y,
        w: y.iter().map(|&l| if l { w_pos } else { w_neg }).collect(),
        l2: config.l2,
    };
    let dim = means.len();
    let mut params = vec![0.0; dim + 1];
    let mut loss = prob.loss(&params);
    let mut history = vec![loss];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let g = prob.gradient(&params);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < config.tolerance {
            converged = true;
            break;
        }
        step *= 2.0;
        let (next, next_loss) = loop {
            let cand: Vec<f64> = params.iter().zip(&g).map(|(p, gj)| p - step * gj).collect();
            let l = prob.loss(&cand);
            if l <= loss - 1e-4 * step * gnorm2 || step < 1e-12 {
                break (cand, l);
            }
            step *= 0.5;
        };
        if next_loss > loss {
            break;
        }
        params = next;
        loss = next_loss;
        history.push(loss);
        iterations += 1;
    }
    let bias = params.pop().expect("bias present");
    Ok(LogisticFit {
        model: LogisticModel {
            features,
            weights: params,
            bias,
            means,
            scales,
        },
        loss_history: history,
        iterations,
        converged,
    })
}

/// Outcome of a stratified train/test run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub fit: LogisticFit,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub test_metrics: DetectionMetrics,
}

/// Stratified split (per class, seeded shuffle, `round(fraction * n)` to
/// training), fit on the training part, score on the rest.
pub fn train_logistic(samples: &[(WindowFeatures, bool)], config: &LogisticConfig) -> Result<TrainOutcome, DetectorError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(DetectorError::InvalidConfig("train_fraction must be in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].1 == class).collect();
        if idx.is_empty() {
            return Err(DetectorError::SingleClass);
        }
        idx.shuffle(&mut rng);
        let n_train = ((config.train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        test_idx.extend_from_slice(&idx[n_train..]);
        train_idx.extend_from_slice(&idx[..n_train]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| samples[i].0.select(config.features)).collect();
    let y: Vec<bool> = train_idx.iter().map(|&i| samples[i].1).collect();
    let fit = fit_logistic(&x, &y, config.features, config)?;
    let pred: Vec<bool> = test_idx.iter().map(|&i| fit.model.predict(&samples[i].0)).collect();
    let labels: Vec<bool> = test_idx.iter().map(|&i| samples[i].1).collect();
    let test_metrics = evaluate_detector(&pred, &labels)?;
    Ok(TrainOutcome {
        fit,
        train_idx,
        test_idx,
        test_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(sd: f64, label: bool) -> (WindowFeatures, bool) {
        (
            WindowFeatures {
                sd,
                outlier_prop: 0.0,
                ..Default::default()
            },
            label,
        )
    }

    #[test]
    fn separable_one_dimensional() {
        let data: Vec<_> = (0..40).map(|i| sample(i as f64, i >= 20)).collect();
        let out = train_logistic(&data, &LogisticConfig::default()).unwrap();
        assert_eq!(out.test_metrics.f1, 1.0);
        assert_eq!(out.train_idx.len() + out.test_idx.len(), 40);
        assert_eq!(out.test_idx.iter().filter(|&&i| data[i].1).count(), 6);
    }

    #[test]
    fn loss_never_increases() {
        let data: Vec<_> = (0..30).map(|i| sample((i * 7 % 11) as f64, i % 3 == 0)).collect();
        let out = train_logistic(&data, &LogisticConfig::default()).unwrap();
        for w in out.fit.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = (0..10).map(|i| sample(i as f64, true)).collect();
        assert_eq!(
            train_logistic(&data, &LogisticConfig::default()).unwrap_err(),
            DetectorError::SingleClass
        );
    }
}
