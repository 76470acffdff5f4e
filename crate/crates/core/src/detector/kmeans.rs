use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorError, FeatureSet, WindowFeatures};

const MAX_ITER: usize = 300;
const N_INIT: usize = 20;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[Vec<f64>], limit: usize) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// Result of a Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = d.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        for (i, &di) in d.iter().enumerate() {
            if di > 0.0 && pick < di {
                chosen = i;
                break;
            }
            pick -= di;
        }
        centroids.push(points[chosen].clone());
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            objective += d;
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        history.push(objective);
        if !changed || iterations == MAX_ITER {
            return KMeansFit {
                centroids,
                assignments,
                objective,
                history,
                iterations,
            };
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignments) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // reseed an empty cluster at the point worst served by its centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[assignments[a]])
                            .total_cmp(&dist2(&points[b], &centroids[assignments[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty");
                centroids[j] = points[far].clone();
                assignments[far] = j;
            } else {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
}

/// Single-point transfers (Hartigan): moves a point to another cluster
/// whenever that lowers the objective, accounting for both centroids
/// shifting, until no move helps. The result is still a Lloyd fixpoint.
fn hartigan(points: &[Vec<f64>], fit: &mut KMeansFit) {
    let k = fit.centroids.len();
    let mut counts = vec![0usize; k];
    for &j in &fit.assignments {
        counts[j] += 1;
    }
    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < MAX_ITER {
        improved = false;
        sweeps += 1;
        for (i, p) in points.iter().enumerate() {
            let from = fit.assignments[i];
            if counts[from] < 2 {
                continue;
            }
            let nf = counts[from] as f64;
            let removal = nf / (nf - 1.0) * dist2(p, &fit.centroids[from]);
            let mut best: Option<(usize, f64)> = None;
            for to in (0..k).filter(|&j| j != from) {
                let nt = counts[to] as f64;
                let addition = nt / (nt + 1.0) * dist2(p, &fit.centroids[to]);
                // relative margin keeps rounding noise from cycling points
                if addition < removal * (1.0 - 1e-12) && best.is_none_or(|(_, a)| addition < a) {
                    best = Some((to, addition));
                }
            }
            if let Some((to, _)) = best {
                let nt = counts[to] as f64;
                for (c, v) in fit.centroids[from].iter_mut().zip(p) {
                    *c = (*c * nf - v) / (nf - 1.0);
                }
                for (c, v) in fit.centroids[to].iter_mut().zip(p) {
                    *c = (*c * nt + v) / (nt + 1.0);
                }
                counts[from] -= 1;
                counts[to] += 1;
                fit.assignments[i] = to;
                improved = true;
            }
        }
    }
    // recompute exactly from the final partition
    let dim = points[0].len();
    for j in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(&fit.assignments).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
        fit.centroids[j] = (0..dim)
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
            .collect();
    }
    let objective = points
        .iter()
        .zip(&fit.assignments)
        .map(|(p, &j)| dist2(p, &fit.centroids[j]))
        .sum();
    if objective < fit.objective {
        fit.objective = objective;
        fit.history.push(objective);
    }
}

/// k-means with k-means++ seeding and Lloyd iterations until the assignment
/// stops changing (at most 300 steps), then single-point transfers. Keeps
/// the best of twenty seeded restarts.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit, DetectorError> {
    let distinct = distinct_count(points, k);
    if k == 0 || distinct < k {
        return Err(DetectorError::DegenerateData { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..N_INIT {
        let mut fit = lloyd(points, plus_plus_init(points, k, &mut rng));
        hartigan(points, &mut fit);
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Two-cluster detector over standardized window features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub features: FeatureSet,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Centroids in standardized coordinates.
    pub centroids: Vec<Vec<f64>>,
    pub attack_cluster: usize,
    pub objective: f64,
}

impl KMeansModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn cluster(&self, f: &WindowFeatures) -> usize {
        nearest(&self.standardize(&f.select(self.features)), &self.centroids).0
    }

    pub fn predict(&self, f: &WindowFeatures) -> bool {
        self.cluster(f) == self.attack_cluster
    }

    /// Centroids mapped back to feature units.
    pub fn centroids_raw(&self) -> Vec<Vec<f64>> {
        self.centroids
            .iter()
            .map(|c| {
                c.iter()
                    .zip(self.means.iter().zip(&self.scales))
                    .map(|(z, (m, s))| z * s + m)
                    .collect()
            })
            .collect()
    }
}

/// Population mean and SD per column; a zero SD becomes 1.
pub(crate) fn column_scaling(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scales = (0..dim)
        .map(|j| {
            let s = (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, scales)
}

/// Fits 2-means to the window features. The attack cluster is the one with
/// the larger outlier proportion at its centroid, ties broken by SD.
pub fn fit_kmeans(features: &[WindowFeatures], set: FeatureSet, seed: u64) -> Result<KMeansModel, DetectorError> {
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.select(set)).collect();
    let distinct = distinct_count(&raw, 2);
    if distinct < 2 {
        return Err(DetectorError::DegenerateData { k: 2, distinct });
    }
    let (means, scales) = column_scaling(&raw);
    let z: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| r.iter().zip(means.iter().zip(&scales)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let fit = kmeans(&z, 2, seed)?;
    let (o, s) = (set.outlier_index(), set.sd_index());
    let c = &fit.centroids;
    let attack_cluster = match c[1][o].total_cmp(&c[0][o]).then(c[1][s].total_cmp(&c[0][s])) {
        std::cmp::Ordering::Greater => 1,
        _ => 0,
    };
    Ok(KMeansModel {
        features: set,
        means,
        scales,
        centroids: fit.centroids,
        attack_cluster,
        objective: fit.objective,
    })
}
