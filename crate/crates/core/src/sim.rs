//! Deterministic frame-loop simulator for the foveated-rendering timing
//! side channel.
//!
//! Each frame `k` starts at `t_k`, looks up the HCO rectangle and the
//! shading-rate map current at `t_k`, and converts the overlap into a frame
//! duration
//!
//! ```text
//! d_k = base + w * (k_fovea * f_fovea[k-L] + k_peri * f_peri[k-L]) + n_k
//! n_k = rho * n_{k-1} + sigma * e_k,   e_k ~ N(0, 1)
//! ```
//!
//! where `w` is the HCO cost weight and `L` the pipeline latency in frames.
//! The next frame starts at `t_{k+1} = t_k + d_k / 1000`.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foveation::{build_map, overlap_weights, FoveationConfig, FoveationError, Rect, ShadingRateMap};
use crate::trace::{
    validate_log, Axis, FrameRecord, Gaze, GazeTrace, MetricPolarity, SessionLog, TracePoint, TraceError,
};

/// Name of the noise generator, recorded in every simulated log.
pub const NOISE_GENERATOR: &str = "ChaCha8Rng/rand_distr::StandardNormal";

/// Lower bound on a frame duration as a fraction of the base frame time.
const MIN_FRAME_FRACTION: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("gaze trace covers [{start}, {end}] s but the session needs [0, {duration}] s")]
    TraceTooShort { start: f64, end: f64, duration: f64 },
    #[error("time {t} s is outside the sweep [0, {t_scan}] s")]
    OutOfScan { t: f64, t_scan: f64 },
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Foveation(#[from] FoveationError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSchedule {
    /// Seconds per single-axis sweep.
    pub t_scan: f64,
    pub fov_x: f64,
    pub fov_y: f64,
    /// Seconds the HCO rests (off-screen) between sweeps.
    pub idle_gap: f64,
    /// When false the HCOs stay parked at the FOV margin: no motion, no
    /// foveal overlap. Scan ids still advance on the same clock.
    pub active: bool,
}

impl Default for ScanSchedule {
    fn default() -> Self {
        ScanSchedule {
            t_scan: 0.2,
            fov_x: 107.52,
            fov_y: 75.0,
            idle_gap: 0.0,
            active: true,
        }
    }
}

impl ScanSchedule {
    pub fn fov(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.fov_x,
            Axis::Y => self.fov_y,
        }
    }

    /// Angular distance the HCO covers per millisecond of frame time.
    pub fn degrees_per_ms(&self, axis: Axis) -> f64 {
        self.fov(axis) / (self.t_scan * 1000.0)
    }

    fn phase(&self, t: f64) -> ScanPhase {
        let period = self.t_scan + self.idle_gap;
        let sweep = (t / period).floor().max(0.0) as u64;
        let t_in = t - sweep as f64 * period;
        let axis = if sweep.is_multiple_of(2) { Axis::X } else { Axis::Y };
        ScanPhase {
            scan_id: sweep + 1,
            axis,
            t_in: t_in.max(0.0),
            moving: t_in <= self.t_scan,
        }
    }
}

struct ScanPhase {
    scan_id: u64,
    axis: Axis,
    t_in: f64,
    moving: bool,
}

/// HCO position along `axis` at `t_in_scan` seconds into a sweep: X runs
/// left to right, Y bottom to top.
pub fn hco_position(t_in_scan: f64, axis: Axis, schedule: &ScanSchedule) -> Result<f64, SimError> {
    if !(0.0..=schedule.t_scan).contains(&t_in_scan) {
        return Err(SimError::OutOfScan {
            t: t_in_scan,
            t_scan: schedule.t_scan,
        });
    }
    let half = schedule.fov(axis) / 2.0;
    Ok(-half + 2.0 * half * t_in_scan / schedule.t_scan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HcoConfig {
    /// Width of the X-scan HCO, degrees.
    pub width_x: f64,
    /// Height of the Y-scan HCO, degrees.
    pub height_y: f64,
    /// Dimensionless multiplier on the overlap cost (stands in for the
    /// number of cylinders per HCO).
    pub cost_weight: f64,
}

impl Default for HcoConfig {
    fn default() -> Self {
        HcoConfig {
            width_x: 5.3,
            height_y: 6.9,
            cost_weight: 1.0,
        }
    }
}

impl HcoConfig {
    /// HCO footprint when centred at `angle` on `axis`; it spans the full
    /// other dimension of the view.
    pub fn rect(&self, axis: Axis, angle: f64, schedule: &ScanSchedule) -> Rect {
        match axis {
            Axis::X => Rect::centered(angle, 0.0, self.width_x, schedule.fov_y),
            Axis::Y => Rect::centered(0.0, angle, schedule.fov_x, self.height_y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Innovation standard deviation, ms.
    pub sigma: f64,
    /// AR(1) coefficient in [0, 1).
    pub rho: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { sigma: 0.0, rho: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Frame time with no HCO load, ms.
    pub base_frame_time: f64,
    /// ms added per unit of foveal overlap fraction.
    pub k_fovea: f64,
    /// ms added per unit of perifoveal overlap fraction.
    pub k_peri: f64,
    /// Frames between an overlap and its effect on the metric.
    pub latency_frames: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            base_frame_time: 1000.0 / 120.0,
            k_fovea: 2.5,
            k_peri: 0.5,
            latency_frames: 0,
            noise: NoiseModel::default(),
            seed: 0,
        }
    }
}

impl CostModel {
    pub fn with_fps(mut self, fps: f64) -> Self {
        self.base_frame_time = 1000.0 / fps;
        self
    }

    /// Moves `k_fovea` toward `k_peri`: 1.0 keeps it, 0.0 removes the
    /// foveal/perifoveal contrast.
    pub fn with_foveation_strength(mut self, strength: f64) -> Self {
        self.k_fovea = self.k_peri + strength * (self.k_fovea - self.k_peri);
        self
    }
}

/// Everything needed to generate one session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub schedule: ScanSchedule,
    pub hco: HcoConfig,
    pub cost: CostModel,
    pub foveation: FoveationConfig,
    pub polarity: MetricPolarity,
    /// Seconds of simulated play.
    pub duration: f64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        self.foveation.validate()?;
        let s = &self.schedule;
        if !(s.t_scan > 0.0) || !(s.idle_gap >= 0.0) {
            return bad("t_scan must be > 0 and idle_gap >= 0");
        }
        if !(s.fov_x > 0.0 && s.fov_y > 0.0) {
            return bad("schedule fov must be positive");
        }
        let h = &self.hco;
        if !(h.width_x > 0.0 && h.height_y > 0.0) || !(h.cost_weight >= 0.0) {
            return bad("HCO extents must be > 0 and cost_weight >= 0");
        }
        let c = &self.cost;
        if !(c.base_frame_time > 0.0) {
            return bad("base_frame_time must be > 0");
        }
        if !(c.k_fovea >= c.k_peri && c.k_peri >= 0.0) {
            return bad("need k_fovea >= k_peri >= 0");
        }
        if !(c.noise.sigma >= 0.0) || !(0.0..1.0).contains(&c.noise.rho) {
            return bad("need sigma >= 0 and rho in [0, 1)");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be > 0");
        }
        Ok(())
    }
}

/// Caches the most recent shading-rate map and rebuilds it only when the
/// held gaze sample changes.
struct MapClock<'a> {
    trace: &'a GazeTrace,
    config: &'a FoveationConfig,
    tick: Option<u64>,
    map: Option<ShadingRateMap>,
}

impl<'a> MapClock<'a> {
    fn map_at(&mut self, t: f64) -> Result<&ShadingRateMap, SimError> {
        let tick = (t / self.config.update_period).floor().max(0.0) as u64;
        if self.tick != Some(tick) {
            let gaze = self.trace.at(tick as f64 * self.config.update_period);
            if self.map.as_ref().map(|m| m.gaze_center()) != Some(gaze) {
                self.map = Some(build_map(gaze, self.config)?);
            }
            self.tick = Some(tick);
        }
        Ok(self.map.as_ref().expect("map built above"))
    }
}

/// Runs the frame loop for `config.duration` seconds and returns the
/// validated session log with ground-truth gaze filled in. Identical inputs
/// produce identical logs.
pub fn simulate_session(trace: &GazeTrace, config: &SessionConfig) -> Result<SessionLog, SimError> {
    config.validate()?;
    if trace.start() > 0.0 || trace.end() < config.duration {
        return Err(SimError::TraceTooShort {
            start: trace.start(),
            end: trace.end(),
            duration: config.duration,
        });
    }
    let schedule = &config.schedule;
    let cost = &config.cost;
    let mut rng = ChaCha8Rng::seed_from_u64(cost.seed);
    let mut clock = MapClock {
        trace,
        config: &config.foveation,
        tick: None,
        map: None,
    };

    // overlap history as (f_fovea, f_peri) per frame, for the latency line
    let mut overlap: Vec<(f64, f64)> = Vec::new();
    let mut records = Vec::new();
    let mut noise = 0.0;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < config.duration {
        let phase = schedule.phase(t);
        let (angle, f) = if schedule.active && phase.moving {
            let angle = hco_position(phase.t_in.min(schedule.t_scan), phase.axis, schedule)?;
            let map = clock.map_at(t)?;
            let rect = config.hco.rect(phase.axis, angle, schedule);
            let w = overlap_weights(rect, map, &config.foveation)?;
            (angle, (w.fovea, w.perifovea))
        } else {
            let half = schedule.fov(phase.axis) / 2.0;
            let parked = if schedule.active { half } else { -half };
            (parked, (0.0, 0.0))
        };
        overlap.push(f);

        let (ff, fp) = overlap[k.saturating_sub(cost.latency_frames)];
        let eps: f64 = StandardNormal.sample(&mut rng);
        noise = cost.noise.rho * noise + cost.noise.sigma * eps;
        let load = config.hco.cost_weight * (cost.k_fovea * ff + cost.k_peri * fp);
        let d = (cost.base_frame_time + load + noise).max(MIN_FRAME_FRACTION * cost.base_frame_time);
        let metric = match config.polarity {
            MetricPolarity::LoadIncreasesMetric => d,
            MetricPolarity::LoadDecreasesMetric => 1000.0 / d,
        };
        records.push(FrameRecord {
            t,
            metric,
            hco_angle: angle,
            axis: phase.axis,
            scan_id: phase.scan_id,
            gt_gaze: Some(trace.at(t)),
        });
        t += d / 1000.0;
        k += 1;
    }
    let log = validate_log(records, config.polarity)?;
    Ok(log.with_generator(format!("{NOISE_GENERATOR} seed={}", cost.seed)))
}

/// Synthetic fixation/saccade gaze trace sampled at `rate_hz`: fixations of
/// 0.2 to 0.8 s at uniformly drawn points inside `extent` of the half-FOV,
/// joined by 30 ms linear saccades.
pub fn synthetic_gaze_trace(
    duration: f64,
    fov_x: f64,
    fov_y: f64,
    extent: f64,
    rate_hz: f64,
    seed: u64,
) -> GazeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy) = (fov_x / 2.0 * extent, fov_y / 2.0 * extent);
    let draw = |rng: &mut ChaCha8Rng| Gaze::new(rng.random_range(-hx..=hx), rng.random_range(-hy..=hy));

    let saccade = 0.030;
    let mut segments: Vec<(f64, Gaze)> = Vec::new();
    let mut t = 0.0;
    let mut current = draw(&mut rng);
    while t <= duration + saccade {
        segments.push((t, current));
        t += rng.random_range(0.2..=0.8);
        current = draw(&mut rng);
    }

    let n = (duration * rate_hz).ceil() as usize + 1;
    let mut points = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let ts = (i as f64 / rate_hz).min(duration);
        while seg + 1 < segments.len() && segments[seg + 1].0 <= ts {
            seg += 1;
        }
        let (_, g0) = segments[seg];
        let gaze = match segments.get(seg + 1) {
            // last `saccade` seconds of a fixation blend into the next one
            Some(&(t1, g1)) if ts > t1 - saccade => {
                let a = (ts - (t1 - saccade)) / saccade;
                Gaze::new(g0.x + a * (g1.x - g0.x), g0.y + a * (g1.y - g0.y))
            }
            _ => g0,
        };
        points.push(TracePoint { t: ts, gaze });
    }
    GazeTrace::new(points).expect("generated trace is sorted and nonempty")
}
