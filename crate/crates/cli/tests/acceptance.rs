//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use foveaprobe_cli::calibrate::CalibrationFile;
use foveaprobe_cli::{run, Cli};
use foveaprobe_core::detector::{extract_features, kmeans, DetectorConfig};
use foveaprobe_core::foveation::{build_map, overlap_weights, FoveationConfig};
use foveaprobe_core::inference::{
    apply_offset, calibrate_constant, calibrate_linear, calibrate_tangent, run_inference, Fov, LinearGrid,
    OffsetModel, ParamRange, ScanEstimate, SmoothingConfig, TangentGrid,
};
use foveaprobe_core::profile::Profile;
use foveaprobe_core::signal::smooth_sg;
use foveaprobe_core::sim::{simulate_session, HcoConfig, NoiseModel, ScanSchedule};
use foveaprobe_core::trace::{Axis, Gaze, GazeTrace, SessionLog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- oracles

/// Least squares by Householder QR: minimises |a c - b| for a full-rank
/// tall matrix given by rows.
fn lstsq(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let (m, n) = (a.len(), a[0].len());
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut qtb = b.to_vec();
    for k in 0..n {
        let norm = (k..m).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for j in k..n {
            let s = 2.0 * (k..m).map(|i| v[i - k] * r[i][j]).sum::<f64>() / vv;
            for i in k..m {
                r[i][j] -= s * v[i - k];
            }
        }
        let s = 2.0 * (k..m).map(|i| v[i - k] * qtb[i]).sum::<f64>() / vv;
        for i in k..m {
            qtb[i] -= s * v[i - k];
        }
    }
    let mut c = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| r[k][j] * c[j]).sum();
        c[k] = (qtb[k] - tail) / r[k][k];
    }
    c
}

/// Each point fitted on its own: a degree-`order` polynomial in the sample
/// offset from that point, over the full window nearest to it. The fitted
/// value at the point is the intercept.
fn sg_oracle(series: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = series.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - window);
            let rows: Vec<Vec<f64>> = (start..start + window)
                .map(|j| {
                    let t = j as f64 - i as f64;
                    (0..=order).map(|p| t.powi(p as i32)).collect()
                })
                .collect();
            lstsq(&rows, &series[start..start + window])[0]
        })
        .collect()
}

fn linear_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

// --------------------------------------------------------------- criteria

fn c1_sg_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(40..=300);
        let phase: f64 = rng.random_range(0.0..6.0);
        let series: Vec<f64> = (0..n)
            .map(|i| 8.0 + 3.0 * (i as f64 * 0.07 + phase).sin() + rng.random_range(-1.0..1.0))
            .collect();
        for (w, o) in [(27, 2), (15, 5)] {
            let got = smooth_sg(&series, w, o).map_err(|e| e.to_string())?;
            let want = sg_oracle(&series, w, o);
            for (g, e) in got.iter().zip(&want) {
                worst = worst.max((g - e).abs());
            }
        }
    }
    let mut quad_worst = 0.0f64;
    for s in 0..20 {
        let (a, b, c) = (s as f64 - 7.0, 0.3 * s as f64, 0.01 * (s as f64 - 9.5));
        let series: Vec<f64> = (0..200).map(|i| a + b * i as f64 + c * (i * i) as f64).collect();
        let scale = series.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (w, o) in [(27, 2), (15, 5)] {
            let got = smooth_sg(&series, w, o).map_err(|e| e.to_string())?;
            for (g, e) in got.iter().zip(&series) {
                quad_worst = quad_worst.max((g - e).abs() / scale);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max |diff| {worst:.2e}, quadratic rel. {quad_worst:.2e}, {secs:.2} s");
    ensure(worst <= 1e-9 && quad_worst <= 1e-12 && secs < 5.0, detail.clone())?;
    Ok(detail)
}

fn c2_overlap_oracle() -> Outcome {
    let cfg = FoveationConfig::default();
    let schedule = ScanSchedule::default();
    let hco = HcoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut worst_sum, mut region_mismatch) = (0.0f64, 0.0f64, 0usize);
    let (w, h) = (cfg.map_w, cfg.map_h);
    for _ in 0..50 {
        let gaze = Gaze::new(
            rng.random_range(-0.5..=0.5) * cfg.fov_x,
            rng.random_range(-0.5..=0.5) * cfg.fov_y,
        );
        let axis = if rng.random_bool(0.5) { Axis::X } else { Axis::Y };
        let angle = rng.random_range(-0.5..=0.5) * schedule.fov(axis);
        let rect = hco.rect(axis, angle, &schedule);
        let map = build_map(gaze, &cfg).map_err(|e| e.to_string())?;
        let lib = overlap_weights(rect, &map, &cfg).map_err(|e| e.to_string())?;

        let gc = ((gaze.x / cfg.fov_x + 0.5) * (w - 1) as f64 + 0.5).floor();
        let gr = ((0.5 - gaze.y / cfg.fov_y) * (h - 1) as f64 + 0.5).floor();
        let r_fov = cfg.foveal_diameter / 2.0;
        let r_peri = r_fov + cfg.perifoveal_width;
        let (px, py) = (cfg.fov_x / (w - 1) as f64, cfg.fov_y / (h - 1) as f64);
        let mut area = [0.0f64; 3];
        for row in 0..h {
            let cy = cfg.fov_y / 2.0 - row as f64 * py;
            let oy = (rect.y_max.min(cy + py / 2.0) - rect.y_min.max(cy - py / 2.0)).max(0.0);
            for col in 0..w {
                let cx = -cfg.fov_x / 2.0 + col as f64 * px;
                let ox = (rect.x_max.min(cx + px / 2.0) - rect.x_min.max(cx - px / 2.0)).max(0.0);
                let d = ((col as f64 - gc).powi(2) + (row as f64 - gr).powi(2)).sqrt();
                let region = if d <= r_fov {
                    0
                } else if d <= r_peri {
                    1
                } else {
                    2
                };
                if region != map.region(col, row).code() as usize {
                    region_mismatch += 1;
                }
                area[region] += ox * oy;
            }
        }
        let total: f64 = area.iter().sum();
        let brute = [area[0] / total, area[1] / total, area[2] / total];
        for (b, l) in brute.iter().zip([lib.fovea, lib.perifovea, lib.periphery]) {
            worst = worst.max((b - l).abs());
        }
        worst_sum = worst_sum.max((lib.sum() - 1.0).abs());
    }
    let detail = format!("max |diff| {worst:.2e}, max |sum - 1| {worst_sum:.2e}, region mismatches {region_mismatch}");
    ensure(worst <= 1e-12 && worst_sum <= 1e-12 && region_mismatch == 0, detail.clone())?;
    Ok(detail)
}

const GRID_POINTS: [(f64, f64); 9] = [
    (-30.0, -20.0),
    (0.0, -20.0),
    (30.0, -20.0),
    (-30.0, 0.0),
    (0.0, 0.0),
    (30.0, 0.0),
    (-30.0, 20.0),
    (0.0, 20.0),
    (30.0, 20.0),
];

fn quiet_session(gaze: Gaze, fps: f64, latency: usize, duration: f64) -> Result<SessionLog, String> {
    let mut cfg = Profile::Desktop.session_config(duration, 0);
    cfg.cost = cfg.cost.with_fps(fps);
    cfg.cost.latency_frames = latency;
    cfg.cost.noise = NoiseModel { sigma: 0.0, rho: 0.0 };
    simulate_session(&GazeTrace::fixed(gaze, duration), &cfg).map_err(|e| e.to_string())
}

/// HCO travel per mean frame on each axis.
fn frame_step(log: &SessionLog) -> (f64, f64) {
    let s = ScanSchedule::default();
    let per_deg = 1.0 / log.mean_frame_rate() / s.t_scan;
    (per_deg * s.fov_x, per_deg * s.fov_y)
}

/// Smoothing followed by the extremum search, without the desktop outlier
/// filter and moving average.
fn sg_only() -> SmoothingConfig {
    SmoothingConfig {
        outlier_filter: false,
        neighbor_avg: 0,
        ..Profile::Desktop.smoothing()
    }
}

fn raw_estimates(log: &SessionLog, smoothing: &SmoothingConfig) -> Result<Vec<ScanEstimate>, String> {
    let s = ScanSchedule::default();
    let out = run_inference(
        log,
        smoothing,
        &OffsetModel::IDENTITY,
        Fov { x: s.fov_x, y: s.fov_y },
    )
    .map_err(|e| e.to_string())?;
    ensure(out.short_windows.is_empty(), "scan windows shorter than the SG window")?;
    ensure(!out.estimates.is_empty(), "no scan estimates")?;
    Ok(out.estimates)
}

fn worst_steps(log: &SessionLog, smoothing: &SmoothingConfig) -> Result<f64, String> {
    let (sx, sy) = frame_step(log);
    let mut worst: f64 = 0.0;
    for e in raw_estimates(log, smoothing)? {
        let gt = e.gt.ok_or("missing ground truth")?;
        let step = if e.axis == Axis::X { sx } else { sy };
        worst = worst.max((e.p_initial - gt).abs() / step);
    }
    Ok(worst)
}

fn c3_zero_noise() -> Outcome {
    let start = Instant::now();
    let (mut core, mut desktop) = (Vec::new(), Vec::new());
    let mut ok = true;
    for fps in [120.0, 160.0, 200.0] {
        let (mut w_core, mut w_desktop): (f64, f64) = (0.0, 0.0);
        for &(x, y) in &GRID_POINTS {
            let log = quiet_session(Gaze::new(x, y), fps, 0, 2.0)?;
            w_core = w_core.max(worst_steps(&log, &sg_only())?);
            w_desktop = w_desktop.max(worst_steps(&log, &Profile::Desktop.smoothing())?);
        }
        ok &= w_core <= 1.0;
        core.push(format!("{w_core:.2}"));
        desktop.push(format!("{w_desktop:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "worst error in frame steps at 120/160/200 FPS: {} (with the desktop outlier filter and 9-point average: {}); {secs:.2} s",
        core.join("/"),
        desktop.join("/")
    );
    ensure(ok && secs < 30.0, detail.clone())?;
    Ok(detail)
}

fn axis_bias(est: &[ScanEstimate], axis: Axis, model: &OffsetModel) -> f64 {
    let v: Vec<f64> = est
        .iter()
        .filter(|e| e.axis == axis)
        .map(|e| apply_offset(e.p_initial, e.p_initial, axis, model).unwrap() - e.gt.unwrap())
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn c4_latency_bias() -> Outcome {
    // interior gaze only: near the far edge the delayed response runs past
    // the end of the sweep and is clipped, which shifts the extremum on top
    // of the latency
    let fov = Profile::Desktop.foveation();
    let (bx, by) = (0.4 * fov.fov_x / 2.0, 0.2 * fov.fov_y / 2.0);
    let fit_points: Vec<(f64, f64)> = [-1.0, 0.0, 1.0]
        .iter()
        .flat_map(|&i| [-1.0, 0.0, 1.0].map(|j| (i * bx, j * by)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let held_out: Vec<(f64, f64)> = (0..16)
        .map(|_| (rng.random_range(-bx..=bx), rng.random_range(-by..=by)))
        .collect();
    let mut parts = Vec::new();
    for latency in [1usize, 2, 3, 5] {
        let (mut fit, mut test) = (Vec::new(), Vec::new());
        let mut steps = Vec::new();
        for (i, &(x, y)) in fit_points.iter().chain(&held_out).enumerate() {
            let log = quiet_session(Gaze::new(x, y), 120.0, latency, 2.0)?;
            steps.push(frame_step(&log));
            let est = raw_estimates(&log, &sg_only())?;
            if i < fit_points.len() {
                fit.extend(est);
            } else {
                test.extend(est);
            }
        }
        let sx = steps.iter().map(|s| s.0).sum::<f64>() / steps.len() as f64;
        let sy = steps.iter().map(|s| s.1).sum::<f64>() / steps.len() as f64;
        let model = calibrate_constant(&fit).map_err(|e| e.to_string())?;
        let mut line = format!("L={latency}");
        for (axis, step) in [(Axis::X, sx), (Axis::Y, sy)] {
            let bias = axis_bias(&fit, axis, &OffsetModel::IDENTITY);
            let expected = latency as f64 * step;
            let residual = axis_bias(&test, axis, &model);
            line.push_str(&format!(" {axis} bias {bias:.2} vs {expected:.2} resid {residual:+.2}"));
            ensure(
                (bias - expected).abs() <= step,
                format!("L={latency} {axis}: bias {bias:.3} vs expected {expected:.3} (step {step:.3})"),
            )?;
            ensure(
                residual.abs() < step / 2.0,
                format!("L={latency} {axis}: held-out residual {residual:.3} (half step {:.3})", step / 2.0),
            )?;
        }
        parts.push(line);
    }
    Ok(parts.join("; "))
}

fn estimate(axis: Axis, p: f64, gt: f64) -> ScanEstimate {
    ScanEstimate {
        scan_id: 0,
        axis,
        window_index: 0,
        t: 0.0,
        p_initial: p,
        p_final: p,
        gt: Some(gt),
        frames: 0,
    }
}

fn tangent_mae(pts: &[(f64, f64)], c: f64, a: f64, k: f64) -> Option<f64> {
    let mut sum = 0.0;
    for &(p, g) in pts {
        let arg = k * (p - c);
        if arg.abs() >= 90.0 {
            return None;
        }
        sum += (p - c + a * arg.to_radians().tan() - g).abs();
    }
    Some(sum / pts.len() as f64)
}

fn c8_calibrators() -> Outcome {
    // linear: P_i = (g + b) / (1 - a) inverts P_f = P_i - (a P_i + b)
    let truth = [(Axis::X, 0.07, 4.3), (Axis::Y, -0.12, -2.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut est = Vec::new();
    for &(axis, a, b) in &truth {
        for _ in 0..60 {
            let g: f64 = rng.random_range(-40.0..40.0);
            est.push(estimate(axis, (g + b) / (1.0 - a), g));
        }
    }
    let grid = LinearGrid::default();
    let (model, _) = calibrate_linear(&est, &grid).map_err(|e| e.to_string())?;
    let OffsetModel::Linear { a_x, b_x, a_y, b_y } = model else {
        return Err("linear calibration returned another model".into());
    };
    for (got, want, step) in [
        (a_x, truth[0].1, grid.a.step),
        (b_x, truth[0].2, grid.b.step),
        (a_y, truth[1].1, grid.a.step),
        (b_y, truth[1].2, grid.b.step),
    ] {
        ensure(
            (got - want).abs() <= step + 1e-9,
            format!("linear recovered {got} for {want}"),
        )?;
    }

    // tangent: data symmetric around C so stage one lands on it
    let reduced = TangentGrid {
        c: ParamRange::new(15.0, 30.0, 1.0),
        a: ParamRange::new(10.0, 40.0, 2.0),
        k: ParamRange::new(1.0, 4.0, 0.5),
    };
    let tan_truth = [(Axis::X, 22.0, 26.0, 2.5), (Axis::Y, 17.0, 14.0, 1.5)];
    let mut est = Vec::new();
    let mut pts: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for &(axis, c, a, k) in &tan_truth {
        for i in -10..=10 {
            let u = 2.0 * i as f64;
            let g = u + a * (k * u).to_radians().tan();
            est.push(estimate(axis, c + u, g));
            pts.entry(axis.as_str()).or_default().push((c + u, g));
        }
    }
    let fit = calibrate_tangent(&est, &reduced).map_err(|e| e.to_string())?;
    let mut evaluated = 0;
    for (&(axis, c, a, k), got) in tan_truth.iter().zip([fit.x, fit.y]) {
        let p = &pts[axis.as_str()];
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for cc in reduced.c.values() {
            for aa in reduced.a.values() {
                for kk in reduced.k.values() {
                    evaluated += 1;
                    if let Some(m) = tangent_mae(p, cc, aa, kk) {
                        if m < best.0 {
                            best = (m, cc, aa, kk);
                        }
                    }
                }
            }
        }
        let params = (got.params.c, got.params.a, got.params.k);
        ensure(
            params == (best.1, best.2, best.3) && (got.objective - best.0).abs() <= 1e-12,
            format!("{axis}: two-stage {params:?} obj {} vs exhaustive {best:?}", got.objective),
        )?;
        ensure(params == (c, a, k), format!("{axis}: recovered {params:?} for {:?}", (c, a, k)))?;
    }
    ensure(evaluated / 2 <= 5000, "reduced grid too large")?;

    // tenths: A spans 100..=400 in steps of 2, K spans 10..=40 in steps of 2
    let counted = ((400 - 100) / 2 + 1) * ((40 - 10) / 2 + 1);
    let (stage1, stage2) = TangentGrid::default().candidate_counts();
    ensure(
        stage2 == counted && stage2 == 2416,
        format!("stage-two candidates {stage2}, counted {counted}"),
    )?;
    Ok(format!(
        "linear exact to the grid; tangent matches exhaustive optimum over {} joint candidates per axis; default grid {stage1} + {stage2} candidates",
        evaluated / 2
    ))
}

fn c11_small_instances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut instances = 0;
    let mut worst = 0.0f64;
    for trial in 0..300 {
        let k = if trial % 3 == 0 { 3 } else { 2 };
        let n = rng.random_range(k..=8);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut obj = 0.0;
            let mut empty = false;
            for j in 0..k {
                let members: Vec<&Vec<f64>> = pts.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
                if members.is_empty() {
                    empty = true;
                    break;
                }
                let m = members.len() as f64;
                let cx = members.iter().map(|p| p[0]).sum::<f64>() / m;
                let cy = members.iter().map(|p| p[1]).sum::<f64>() / m;
                obj += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
            }
            if !empty {
                best = best.min(obj);
            }
        }
        let fit = kmeans(&pts, k, trial as u64).map_err(|e| e.to_string())?;
        let diff = (fit.objective - best).abs() / best.max(1.0);
        worst = worst.max(diff);
        ensure(
            diff <= 1e-9,
            format!("instance {trial} (n={n}, k={k}): k-means {} vs exhaustive {best}", fit.objective),
        )?;
        instances += 1;
    }

    let cfg = DetectorConfig::default();
    let mut feat_worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(15..=120);
        let base = rng.random_range(4.0..12.0);
        let window: Vec<f64> = (0..n)
            .map(|_| {
                let spike = if rng.random_bool(0.1) { rng.random_range(0.0..1.0) } else { 0.0 };
                base + rng.random_range(-0.1..0.1) + spike
            })
            .collect();
        let got = extract_features(&window, &cfg).map_err(|e| e.to_string())?;
        let s = smooth_sg(&window, cfg.sg_window, cfg.sg_order).map_err(|e| e.to_string())?;
        let nf = n as f64;
        let mean = s.iter().sum::<f64>() / nf;
        let central = |p: i32| s.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / nf;
        let var = central(2);
        let sd = var.sqrt();
        let skew = central(3) / (sd * sd * sd);
        let kurt = central(4) / (var * var) - 3.0;
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        let range = sorted[n - 1] - sorted[0];
        let iqr = linear_quantile(&sorted, 0.75) - linear_quantile(&sorted, 0.25);
        let (lo, hi) = (mean * (1.0 - cfg.outlier_threshold), mean * (1.0 + cfg.outlier_threshold));
        let outside = s.iter().filter(|&&v| v < lo || v > hi).count() as f64 / nf;
        for (g, w) in [
            (got.sd, sd),
            (got.skewness, skew),
            (got.kurtosis, kurt),
            (got.range, range),
            (got.iqr, iqr),
            (got.outlier_prop, outside),
        ] {
            feat_worst = feat_worst.max((g - w).abs());
        }
    }
    ensure(feat_worst <= 1e-9, format!("feature max |diff| {feat_worst:.2e}"))?;
    Ok(format!(
        "{instances} k-means instances at the exhaustive optimum (max rel. diff {worst:.1e}); feature max |diff| {feat_worst:.1e}"
    ))
}

// --------------------------------------------------------------- pipeline

const CAL_TOML: &str = r#"profile = "desktop"
seeds = [100, 101, 102, 103, 104]
duration_s = 30.0
[gaze]
source = "fixed"
"#;

const EVAL_TOML: &str = r#"profile = "desktop"
seeds = [0, 1, 2, 3, 4]
duration_s = 30.0
"#;

const STRENGTH_CAL_TOML: &str = r#"profile = "desktop"
seeds = [100, 101, 102, 103, 104]
duration_s = 30.0
[sweep]
fps = [120.0]
foveation_strength = [1.0, 0.5, 0.1]
[gaze]
source = "fixed"
"#;

const STRENGTH_EVAL_TOML: &str = r#"profile = "desktop"
seeds = [0, 1, 2, 3, 4]
duration_s = 30.0
[sweep]
fps = [120.0]
foveation_strength = [1.0, 0.5, 0.1]
"#;

const DETECT_TOML: &str = r#"profile = "desktop"
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
duration_s = 12.0
[sweep]
attack = [true, false]
"#;

fn cli(args: &[&str]) -> Result<(), String> {
    let parsed = Cli::try_parse_from(std::iter::once("foveaprobe").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    run(parsed).map_err(|e| format!("{}: {e}", args.join(" ")))
}

struct PipelineTimes {
    frame_rate_secs: f64,
    detect_secs: f64,
}

/// Every subcommand, with all artifacts under `root`.
fn pipeline(root: &Path) -> Result<PipelineTimes, String> {
    let p = |rel: &str| root.join(rel).to_string_lossy().into_owned();
    for (name, text) in [
        ("cal.toml", CAL_TOML),
        ("eval.toml", EVAL_TOML),
        ("strength_cal.toml", STRENGTH_CAL_TOML),
        ("strength_eval.toml", STRENGTH_EVAL_TOML),
        ("detect.toml", DETECT_TOML),
    ] {
        fs::write(root.join(name), text).map_err(|e| e.to_string())?;
    }

    let t = Instant::now();
    cli(&["--config", &p("cal.toml"), "--out", &p("cal"), "simulate"])?;
    cli(&["--config", &p("cal.toml"), "--out", &p("cal"), "calibrate"])?;
    cli(&["--config", &p("eval.toml"), "--out", &p("eval"), "simulate"])?;
    cli(&[
        "--config",
        &p("eval.toml"),
        "--out",
        &p("eval"),
        "infer",
        "--calibration",
        &p("cal/calibration.toml"),
    ])?;
    let frame_rate_secs = t.elapsed().as_secs_f64();

    cli(&["--config", &p("strength_cal.toml"), "--out", &p("strength_cal"), "simulate"])?;
    cli(&["--config", &p("strength_cal.toml"), "--out", &p("strength_cal"), "calibrate"])?;
    cli(&["--config", &p("strength_eval.toml"), "--out", &p("strength_eval"), "simulate"])?;
    cli(&[
        "--config",
        &p("strength_eval.toml"),
        "--out",
        &p("strength_eval"),
        "infer",
        "--calibration",
        &p("strength_cal/calibration.toml"),
    ])?;

    let t = Instant::now();
    cli(&["--config", &p("detect.toml"), "--out", &p("detect_logs"), "simulate"])?;
    cli(&[
        "--config",
        &p("detect.toml"),
        "--out",
        &p("eval"),
        "detect",
        "--logs",
        &p("detect_logs/logs"),
    ])?;
    let detect_secs = t.elapsed().as_secs_f64();

    cli(&["--out", &p("eval"), "report"])?;
    Ok(PipelineTimes {
        frame_rate_secs,
        detect_secs,
    })
}

fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect())
        })
        .collect()
}

fn field(row: &BTreeMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("column {key} missing or empty"))
}

fn c5_frame_rate_trend(root: &Path, times: &PipelineTimes) -> Outcome {
    let rows = read_csv(&root.join("eval/infer/error_by_condition.csv"))?;
    let mut pts = Vec::new();
    for r in &rows {
        ensure(field(r, "logs")? >= 5.0, "fewer than 5 logs per frame rate")?;
        pts.push((field(r, "fps")?, field(r, "mae_x_deg")?, field(r, "mae_y_deg")?));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fps: Vec<f64> = pts.iter().map(|p| p.0).collect();
    ensure(fps == [120.0, 160.0, 200.0], format!("frame rates {fps:?}"))?;
    let join = |f: fn(&(f64, f64, f64)) -> f64| pts.iter().map(|p| format!("{:.2}", f(p))).collect::<Vec<_>>().join("/");
    let detail = format!(
        "X {} Y {} deg at 120/160/200 FPS; {:.1} s",
        join(|p| p.1),
        join(|p| p.2),
        times.frame_rate_secs
    );
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].2 <= w[0].2);
    ensure(monotone && times.frame_rate_secs < 180.0, detail.clone())?;
    Ok(detail)
}

fn c6_offset_trend(root: &Path) -> Outcome {
    let file = CalibrationFile::load(&root.join("cal/calibration.toml")).map_err(|e| e.to_string())?;
    let mut offsets = Vec::new();
    for g in &file.groups {
        let OffsetModel::Constant { dx, dy } = g.model else {
            return Err(format!("{} FPS: expected constant offsets", g.fps));
        };
        offsets.push((g.fps, dx, dy));
    }
    offsets.sort_by(|a, b| a.0.total_cmp(&b.0));
    let detail = offsets
        .iter()
        .map(|(f, dx, dy)| format!("{f} FPS dx {dx:.2} dy {dy:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(offsets.len() == 3, format!("expected 3 groups: {detail}"))?;
    ensure(offsets.windows(2).all(|w| w[1].1 < w[0].1), detail.clone())?;
    Ok(detail)
}

fn c7_strength_trend(root: &Path) -> Outcome {
    let rows = read_csv(&root.join("strength_eval/infer/error_by_condition.csv"))?;
    let mut pts = Vec::new();
    for r in &rows {
        ensure(field(r, "logs")? >= 5.0, "fewer than 5 logs per strength")?;
        pts.push((field(r, "foveation_strength")?, field(r, "mae_x_deg")?, field(r, "mae_y_deg")?));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let detail = pts
        .iter()
        .map(|(s, x, y)| format!("strength {s}: X {x:.2} Y {y:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(pts.len() == 3, format!("expected 3 strengths: {detail}"))?;
    ensure(pts.windows(2).all(|w| w[1].1 > w[0].1), detail.clone())?;
    Ok(detail)
}

fn c9_detector(root: &Path, times: &PipelineTimes) -> Outcome {
    let summary = read_csv(&root.join("eval/detect/detect_summary.csv"))?;
    let mut parts = Vec::new();
    let mut logistic = None;
    for r in &summary {
        let (method, scope) = (r["method"].as_str(), r["scope"].as_str());
        let (f1, windows) = (field(r, "f1")?, field(r, "windows")?);
        if method == "kmeans" && scope.starts_with("fps") {
            parts.push(format!("k-means {scope} F1 {f1:.3} ({windows} windows)"));
            ensure(f1 >= 0.95 && windows >= 200.0, parts.join(", "))?;
        }
        if method == "logistic" && scope == "held_out" {
            logistic = Some(f1);
        }
    }
    ensure(parts.len() == 3, "missing per-FPS k-means rows")?;
    let lg = logistic.ok_or("missing held-out logistic row")?;
    parts.push(format!("logistic held-out F1 {lg:.3}"));
    ensure(lg >= 0.90, parts.join(", "))?;

    let study = read_csv(&root.join("eval/detect/f1_vs_window.csv"))?;
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &study {
        if let (Ok(len), Ok(f1)) = (field(r, "window_len_s"), field(r, "f1")) {
            curves.entry(r["fps"].clone()).or_default().push((len, f1));
        }
    }
    ensure(curves.len() == 3, "window study incomplete")?;
    for (fps, c) in &curves {
        let shape = c.iter().map(|(l, f)| format!("{l}:{f:.2}")).collect::<Vec<_>>().join(" ");
        let rising = c.windows(2).all(|w| w[1].1 >= w[0].1 - 0.01);
        let tail: Vec<f64> = c.iter().rev().take(3).map(|p| p.1).collect();
        let saturated = tail.iter().all(|f| *f >= 0.95)
            && tail.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - tail.iter().fold(f64::INFINITY, |m, v| m.min(*v))
                <= 0.01;
        ensure(rising && saturated, format!("{fps} FPS F1 curve not rising/saturating: {shape}"))?;
    }
    parts.push(format!("F1 curves rise and saturate at {} FPS groups", curves.len()));
    parts.push(format!("{:.1} s", times.detect_secs));
    ensure(times.detect_secs < 120.0, parts.join(", "))?;
    Ok(parts.join(", "))
}

fn hash_tree(root: &Path) -> Result<BTreeMap<PathBuf, String>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).map_err(|e| e.to_string())?;
                let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), digest);
            }
        }
    }
    Ok(out)
}

fn c10_determinism(first: &Path) -> Outcome {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(second.path())?;
    let (a, b) = (hash_tree(first)?, hash_tree(second.path())?);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    ensure(
        differing.is_empty(),
        format!("{} of {} files differ, e.g. {:?}", differing.len(), a.len(), differing.first()),
    )?;
    Ok(format!("{} files byte-identical across two full runs", a.len()))
}

// ------------------------------------------------------------------ main

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id:>2} {tag}  {name}: {detail}");
        results.push((id, name, outcome));
    };

    report(1, "SG oracle equivalence", guarded(c1_sg_oracle));
    report(2, "overlap oracle", guarded(c2_overlap_oracle));
    report(3, "zero-noise recovery", guarded(c3_zero_noise));
    report(4, "latency-bias identity", guarded(c4_latency_bias));

    let root = tempfile::tempdir().expect("temp dir");
    match guarded(|| pipeline(root.path())) {
        Ok(times) => {
            report(5, "frame-rate trend", guarded(|| c5_frame_rate_trend(root.path(), &times)));
            report(6, "offset trend", guarded(|| c6_offset_trend(root.path())));
            report(7, "foveation-strength degradation", guarded(|| c7_strength_trend(root.path())));
            report(8, "calibrator recovery", guarded(c8_calibrators));
            report(9, "detector performance", guarded(|| c9_detector(root.path(), &times)));
            report(10, "determinism", guarded(|| c10_determinism(root.path())));
        }
        Err(e) => {
            for (id, name) in [
                (5, "frame-rate trend"),
                (6, "offset trend"),
                (7, "foveation-strength degradation"),
                (9, "detector performance"),
                (10, "determinism"),
            ] {
                report(id, name, Err(format!("pipeline failed: {e}")));
            }
            report(8, "calibrator recovery", guarded(c8_calibrators));
        }
    }
    report(11, "small-instance exactness", guarded(c11_small_instances));

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
