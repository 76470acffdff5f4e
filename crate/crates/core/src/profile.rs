//! Platform presets: the simulator, smoothing and offset family used for a
//! desktop monitor and two headset configurations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::foveation::FoveationConfig;
use crate::inference::SmoothingConfig;
use crate::sim::{CostModel, HcoConfig, NoiseModel, ScanSchedule, SessionConfig};
use crate::trace::MetricPolarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desktop,
    VrMqp,
    VrVarjo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetFamily {
    Constant,
    Linear,
    Tangent,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Desktop, Profile::VrMqp, Profile::VrVarjo];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desktop => "desktop",
            Profile::VrMqp => "vr-mqp",
            Profile::VrVarjo => "vr-varjo",
        }
    }

    pub fn polarity(self) -> MetricPolarity {
        match self {
            // frame rate on desktop, inverted GPU time on the tethered headset
            Profile::Desktop | Profile::VrVarjo => MetricPolarity::LoadDecreasesMetric,
            Profile::VrMqp => MetricPolarity::LoadIncreasesMetric,
        }
    }

    pub fn t_scan(self) -> f64 {
        match self {
            Profile::Desktop => 0.2,
            Profile::VrMqp | Profile::VrVarjo => 0.5,
        }
    }

    pub fn offset_family(self) -> OffsetFamily {
        match self {
            Profile::Desktop => OffsetFamily::Constant,
            Profile::VrMqp => OffsetFamily::Linear,
            Profile::VrVarjo => OffsetFamily::Tangent,
        }
    }

    /// Frame-rate targets swept by default.
    pub fn fps_targets(self) -> Vec<f64> {
        match self {
            Profile::Desktop => vec![120.0, 160.0, 200.0],
            Profile::VrMqp => vec![72.0],
            Profile::VrVarjo => vec![90.0],
        }
    }

    /// Fraction of the half-FOV that synthetic fixations may reach. Head-free
    /// viewing in a headset keeps gaze nearer the centre than a monitor task.
    pub fn gaze_extent(self) -> f64 {
        match self {
            Profile::Desktop => 0.6,
            Profile::VrMqp | Profile::VrVarjo => 0.35,
        }
    }

    pub fn smoothing(self) -> SmoothingConfig {
        match self {
            // a 0.2 s scan at 120 FPS holds only 24 frames
            Profile::Desktop => SmoothingConfig {
                sg_window: 11,
                sg_order: 2,
                neighbor_avg: 4,
                outlier_filter: true,
                outlier_threshold: 3.0,
                outlier_half_width: 3,
            },
            Profile::VrMqp | Profile::VrVarjo => SmoothingConfig::default(),
        }
    }

    pub fn foveation(self) -> FoveationConfig {
        let d = FoveationConfig::default();
        match self {
            Profile::Desktop => d,
            Profile::VrMqp => FoveationConfig {
                fov_x: 108.0,
                fov_y: 96.0,
                foveal_diameter: 40.0,
                ..d
            },
            // square-ish 30° foveal inset, no intermediate ring
            Profile::VrVarjo => FoveationConfig {
                fov_x: 120.0,
                fov_y: 105.0,
                foveal_diameter: 48.0,
                perifoveal_width: 0.0,
                ..d
            },
        }
    }

    /// Simulator settings for a session at the profile's first FPS target.
    pub fn session_config(self, duration: f64, seed: u64) -> SessionConfig {
        let foveation = self.foveation();
        let schedule = ScanSchedule {
            t_scan: self.t_scan(),
            fov_x: foveation.fov_x,
            fov_y: foveation.fov_y,
            ..ScanSchedule::default()
        };
        let (hco, latency_frames, noise) = match self {
            Profile::Desktop => (HcoConfig::default(), 2, NoiseModel { sigma: 0.1, rho: 0.3 }),
            Profile::VrMqp => (
                HcoConfig {
                    width_x: 10.0,
                    height_y: 10.0,
                    cost_weight: 1.0,
                },
                3,
                NoiseModel { sigma: 0.2, rho: 0.3 },
            ),
            Profile::VrVarjo => (
                HcoConfig {
                    width_x: 8.0,
                    height_y: 8.0,
                    cost_weight: 1.0,
                },
                8,
                NoiseModel { sigma: 0.2, rho: 0.3 },
            ),
        };
        SessionConfig {
            schedule,
            hco,
            cost: CostModel {
                latency_frames,
                noise,
                seed,
                ..CostModel::default()
            }
            .with_fps(self.fps_targets()[0]),
            foveation,
            polarity: self.polarity(),
            duration,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown profile '{s}' (expected desktop, vr-mqp or vr-varjo)"))
    }
}
