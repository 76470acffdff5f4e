//! Gaze-contingent shading-rate maps (desktop VRS emulation) and the
//! HCO/region overlap used by the workload simulator.
//!
//! Cells are addressed `(col, row)` with row 0 at the top. Cell `c` is centred
//! at `-fov_x/2 + c * fov_x/(map_w-1)` degrees, so the outer cell centres sit
//! exactly on the FOV edges and each cell spans one pitch around its centre.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Gaze, GazeTrace};

#[derive(Debug, Error, PartialEq)]
pub enum FoveationError {
    #[error("gaze ({x:.3}°, {y:.3}°) lies outside the field of view")]
    OutOfFov { x: f64, y: f64 },
    #[error("gaze trace is empty")]
    EmptyTrace,
    #[error("rectangle has zero area")]
    DegenerateRect,
    #[error("rectangle does not intersect the field of view")]
    NoIntersection,
    #[error("invalid foveation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Region {
    Fovea = 0,
    Perifovea = 1,
    Periphery = 2,
}

impl Region {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Coarse shading rate per region, as the side of the shaded pixel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRates {
    pub fovea: u8,
    pub perifovea: u8,
    pub periphery: u8,
}

impl Default for RegionRates {
    fn default() -> Self {
        RegionRates {
            fovea: 1,
            perifovea: 2,
            periphery: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoveationConfig {
    pub map_w: usize,
    pub map_h: usize,
    pub framebuffer_w: usize,
    pub framebuffer_h: usize,
    /// Foveal disk diameter in cells.
    pub foveal_diameter: f64,
    /// Width of the perifoveal ring in cells.
    pub perifoveal_width: f64,
    pub rates: RegionRates,
    /// Seconds between map updates.
    pub update_period: f64,
    pub fov_x: f64,
    pub fov_y: f64,
}

impl Default for FoveationConfig {
    fn default() -> Self {
        FoveationConfig {
            map_w: 192,
            map_h: 108,
            framebuffer_w: 1920,
            framebuffer_h: 1080,
            foveal_diameter: 21.0,
            perifoveal_width: 20.0,
            rates: RegionRates::default(),
            update_period: 0.010,
            fov_x: 107.52,
            fov_y: 75.0,
        }
    }
}

impl FoveationConfig {
    pub fn validate(&self) -> Result<(), FoveationError> {
        let bad = |m: &str| Err(FoveationError::InvalidConfig(m.to_string()));
        if self.map_w < 2 || self.map_h < 2 {
            return bad("map must be at least 2x2 cells");
        }
        if !(self.foveal_diameter >= 1.0) {
            return bad("foveal_diameter must be >= 1");
        }
        if !(self.perifoveal_width >= 0.0) {
            return bad("perifoveal_width must be >= 0");
        }
        if !(self.update_period > 0.0) {
            return bad("update_period must be > 0");
        }
        if !(self.fov_x > 0.0 && self.fov_y > 0.0) {
            return bad("fov must be positive");
        }
        Ok(())
    }

    /// Degrees per cell horizontally.
    pub fn pitch_x(&self) -> f64 {
        self.fov_x / (self.map_w - 1) as f64
    }

    /// Degrees per cell vertically.
    pub fn pitch_y(&self) -> f64 {
        self.fov_y / (self.map_h - 1) as f64
    }

    pub fn col_center(&self, col: usize) -> f64 {
        -self.fov_x / 2.0 + col as f64 * self.pitch_x()
    }

    pub fn row_center(&self, row: usize) -> f64 {
        self.fov_y / 2.0 - row as f64 * self.pitch_y()
    }

    pub fn contains(&self, gaze: Gaze) -> bool {
        gaze.x.abs() <= self.fov_x / 2.0 && gaze.y.abs() <= self.fov_y / 2.0
    }
}

/// Maps a view angle to its map cell (rounding half up).
pub fn angle_to_cell(gaze: Gaze, config: &FoveationConfig) -> Result<(usize, usize), FoveationError> {
    if !config.contains(gaze) {
        return Err(FoveationError::OutOfFov {
            x: gaze.x,
            y: gaze.y,
        });
    }
    let col = ((gaze.x / config.fov_x + 0.5) * (config.map_w - 1) as f64 + 0.5).floor();
    let row = ((0.5 - gaze.y / config.fov_y) * (config.map_h - 1) as f64 + 0.5).floor();
    Ok((
        (col as usize).min(config.map_w - 1),
        (row as usize).min(config.map_h - 1),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadingRateMap {
    width: usize,
    height: usize,
    cells: Vec<Region>,
    gaze_center: Gaze,
    gaze_cell: (usize, usize),
}

impl ShadingRateMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gaze_center(&self) -> Gaze {
        self.gaze_center
    }

    pub fn gaze_cell(&self) -> (usize, usize) {
        self.gaze_cell
    }

    pub fn region(&self, col: usize, row: usize) -> Region {
        self.cells[row * self.width + col]
    }

    /// Cell counts as `[fovea, perifovea, periphery]`.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.cells {
            c[r.code() as usize] += 1;
        }
        c
    }

    /// Plain-text PGM (P2) grid of region codes 0/1/2.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n2\n", self.width, self.height);
        for row in self.cells.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|r| r.code().to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Builds the shading-rate map centred on `gaze`. Membership uses the
/// distance between cell centres in cell units; the disk is clipped at the
/// map edges.
pub fn build_map(gaze: Gaze, config: &FoveationConfig) -> Result<ShadingRateMap, FoveationError> {
    let (gc, gr) = angle_to_cell(gaze, config)?;
    let r_fovea = config.foveal_diameter / 2.0;
    let r_peri = r_fovea + config.perifoveal_width;
    let mut cells = Vec::with_capacity(config.map_w * config.map_h);
    for row in 0..config.map_h {
        let dy = row as f64 - gr as f64;
        for col in 0..config.map_w {
            let dx = col as f64 - gc as f64;
            let d = (dx * dx + dy * dy).sqrt();
            cells.push(if d <= r_fovea {
                Region::Fovea
            } else if d <= r_peri {
                Region::Perifovea
            } else {
                Region::Periphery
            });
        }
    }
    Ok(ShadingRateMap {
        width: config.map_w,
        height: config.map_h,
        cells,
        gaze_center: gaze,
        gaze_cell: (gc, gr),
    })
}

/// One map per update tick from t = 0 to the end of the trace, each built
/// from the most recent gaze sample at or before the tick. Consecutive ticks
/// with the same gaze share a map.
pub fn map_sequence(
    trace: &GazeTrace,
    config: &FoveationConfig,
) -> Result<Vec<(f64, Arc<ShadingRateMap>)>, FoveationError> {
    if trace.points().is_empty() {
        return Err(FoveationError::EmptyTrace);
    }
    let ticks = (trace.end() / config.update_period - 1e-9).ceil().max(1.0) as usize;
    let mut out: Vec<(f64, Arc<ShadingRateMap>)> = Vec::with_capacity(ticks);
    for i in 0..ticks {
        let t = i as f64 * config.update_period;
        let gaze = trace.at(t);
        let map = match out.last() {
            Some((_, prev)) if prev.gaze_center == gaze => Arc::clone(prev),
            _ => Arc::new(build_map(gaze, config)?),
        };
        out.push((t, map));
    }
    Ok(out)
}

/// Axis-aligned rectangle in view degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Rect {
            x_min: cx - w / 2.0,
            x_max: cx + w / 2.0,
            y_min: cy - h / 2.0,
            y_max: cy + h / 2.0,
        }
    }
}

/// Area share of an HCO rectangle over each region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OverlapWeights {
    pub fovea: f64,
    pub perifovea: f64,
    pub periphery: f64,
}

impl OverlapWeights {
    pub fn sum(&self) -> f64 {
        self.fovea + self.perifovea + self.periphery
    }
}

fn span_overlap(lo: f64, hi: f64, center: f64, half: f64) -> f64 {
    (hi.min(center + half) - lo.max(center - half)).max(0.0)
}

/// Fractions of the rectangle's in-map area lying over each region. Each
/// cell contributes the area of its intersection with the rectangle to the
/// region it belongs to.
pub fn overlap_weights(
    rect: Rect,
    map: &ShadingRateMap,
    config: &FoveationConfig,
) -> Result<OverlapWeights, FoveationError> {
    if !(rect.x_max > rect.x_min && rect.y_max > rect.y_min) {
        return Err(FoveationError::DegenerateRect);
    }
    let (px, py) = (config.pitch_x(), config.pitch_y());
    let (hx, hy) = (px / 2.0, py / 2.0);

    // Candidate ranges padded by one cell; cells outside contribute exactly 0.
    let col_of = |x: f64| (x + config.fov_x / 2.0) / px;
    let row_of = |y: f64| (config.fov_y / 2.0 - y) / py;
    let clamp_idx = |v: f64, n: usize| v.max(0.0).min((n - 1) as f64) as usize;
    let c0 = clamp_idx(col_of(rect.x_min).floor() - 1.0, map.width);
    let c1 = clamp_idx(col_of(rect.x_max).ceil() + 1.0, map.width);
    let r0 = clamp_idx(row_of(rect.y_max).floor() - 1.0, map.height);
    let r1 = clamp_idx(row_of(rect.y_min).ceil() + 1.0, map.height);

    let mut area = [0.0f64; 3];
    for row in r0..=r1 {
        let oy = span_overlap(rect.y_min, rect.y_max, config.row_center(row), hy);
        for col in c0..=c1 {
            let ox = span_overlap(rect.x_min, rect.x_max, config.col_center(col), hx);
            area[map.region(col, row).code() as usize] += ox * oy;
        }
    }
    let total = area[0] + area[1] + area[2];
    if !(total > 0.0) {
        return Err(FoveationError::NoIntersection);
    }
    Ok(OverlapWeights {
        fovea: area[0] / total,
        perifovea: area[1] / total,
        periphery: area[2] / total,
    })
}
