//! Experiment configuration: profile defaults overlaid with a TOML file.

use std::path::{Path, PathBuf};

use foveaprobe_core::detector::{DetectorConfig, FeatureSet};
use foveaprobe_core::foveation::FoveationConfig;
use foveaprobe_core::inference::{LinearGrid, SmoothingConfig, TangentGrid};
use foveaprobe_core::profile::{OffsetFamily, Profile};
use foveaprobe_core::sim::{CostModel, HcoConfig, ScanSchedule};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Sweep axes. `fps` defaults to the profile targets; an empty list on any
/// other axis means the value from its config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub fps: Vec<f64>,
    pub foveation_strength: Vec<f64>,
    pub foveal_diameter: Vec<f64>,
    pub t_scan_s: Vec<f64>,
    /// `false` entries produce null sessions with the scan disabled.
    pub attack: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeSource {
    Synthetic,
    Fixed,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSettings {
    pub source: GazeSource,
    /// Gaze-trace CSV, used when `source = "file"`.
    pub path: String,
    /// Fixation point in degrees for `source = "fixed"`.
    pub fixed: [f64; 2],
    /// Fraction of the half-FOV reachable by synthetic fixations.
    pub extent: f64,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub family: OffsetFamily,
    pub linear: LinearGrid,
    pub tangent: TangentGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSettings {
    pub window_len: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub outlier_threshold: f64,
    pub features: FeatureSet,
    /// Window lengths of the F1 study, seconds.
    pub window_lengths: Vec<f64>,
    pub l2: f64,
    pub train_fraction: f64,
    /// Logistic loss weights for (null, attack) windows.
    pub class_weights: [f64; 2],
}

impl DetectSettings {
    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            window_len: self.window_len,
            sg_window: self.sg_window,
            sg_order: self.sg_order,
            outlier_threshold: self.outlier_threshold,
        }
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub sweep: Sweep,
    pub gaze: GazeSettings,
    pub scan: ScanSchedule,
    pub hco: HcoConfig,
    pub cost: CostModel,
    pub foveation: FoveationConfig,
    pub smoothing: SmoothingConfig,
    pub calibration: CalibrationSettings,
    pub detector: DetectSettings,
}

// Keys filled in per sweep point or derived from other sections.
const DERIVED_KEYS: [(&str, &str); 5] = [
    ("scan", "fov_x"),
    ("scan", "fov_y"),
    ("scan", "active"),
    ("cost", "seed"),
    ("cost", "base_frame_time"),
];

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let session = profile.session_config(30.0, 0);
        let d = DetectorConfig::default();
        ExperimentConfig {
            profile,
            seeds: vec![0, 1, 2, 3, 4],
            duration_s: 30.0,
            sweep: Sweep {
                fps: profile.fps_targets(),
                foveation_strength: Vec::new(),
                foveal_diameter: Vec::new(),
                t_scan_s: Vec::new(),
                attack: Vec::new(),
            },
            gaze: GazeSettings {
                source: GazeSource::Synthetic,
                path: String::new(),
                fixed: [0.0, 0.0],
                extent: profile.gaze_extent(),
                rate_hz: 200.0,
            },
            scan: session.schedule,
            hco: session.hco,
            cost: session.cost,
            foveation: session.foveation,
            smoothing: profile.smoothing(),
            calibration: CalibrationSettings {
                family: profile.offset_family(),
                linear: LinearGrid::default(),
                tangent: TangentGrid::default(),
            },
            detector: DetectSettings {
                window_len: d.window_len,
                sg_window: d.sg_window,
                sg_order: d.sg_order,
                outlier_threshold: d.outlier_threshold,
                features: FeatureSet::SdOutlier,
                window_lengths: vec![0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0],
                l2: 1e-3,
                train_fraction: 0.7,
                class_weights: [1.0, 1.0],
            },
        }
    }

    /// Parses a config document. `profile_override` wins over the file's
    /// `profile` key; every other key must exist in the profile defaults.
    pub fn from_toml(text: &str, profile_override: Option<Profile>) -> Result<Self, CliError> {
        let mut user: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let file_profile = match user.remove("profile") {
            Some(Value::String(s)) => Some(s.parse::<Profile>().map_err(CliError::Config)?),
            Some(other) => return Err(CliError::Config(format!("profile must be a string, got {other}"))),
            None => None,
        };
        let profile = profile_override.or(file_profile).unwrap_or(Profile::Desktop);
        let defaults = ExperimentConfig::for_profile(profile);
        let full = Table::try_from(&defaults).map_err(|e| CliError::Config(e.to_string()))?;
        let mut base = full.clone();
        base.remove("profile");
        for (section, key) in DERIVED_KEYS {
            if let Some(Value::Table(t)) = base.get_mut(section) {
                t.remove(key);
            }
        }
        merge(&mut base, user, "")?;
        base.insert("profile".into(), Value::String(profile.as_str().into()));
        for (section, key) in DERIVED_KEYS {
            if let (Some(Value::Table(dst)), Some(Value::Table(src))) = (base.get_mut(section), full.get(section)) {
                dst.insert(key.into(), src[key].clone());
            }
        }
        let cfg: ExperimentConfig = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, profile_override: Option<Profile>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::MissingInput {
                    what: "config file",
                    path: p.to_path_buf(),
                    reason: e.to_string(),
                })?;
                ExperimentConfig::from_toml(&text, profile_override)
                    .map_err(|e| match e {
                        CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                        other => other,
                    })
            }
            None => Ok(ExperimentConfig::for_profile(profile_override.unwrap_or(Profile::Desktop))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(self.duration_s > 0.0) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.sweep.fps.is_empty() || self.sweep.fps.iter().any(|f| !(*f > 0.0)) {
            return bad("sweep.fps must list positive frame rates".into());
        }
        if self.gaze.source == GazeSource::File && self.gaze.path.is_empty() {
            return bad("gaze.source = \"file\" needs gaze.path".into());
        }
        if !(self.gaze.rate_hz > 0.0) || !(self.gaze.extent > 0.0 && self.gaze.extent <= 1.0) {
            return bad("gaze.rate_hz must be positive and gaze.extent in (0, 1]".into());
        }
        self.detector_validate()?;
        self.smoothing_check()
    }

    fn detector_validate(&self) -> Result<(), CliError> {
        self.detector
            .detector_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.detector.window_lengths.iter().any(|w| !(*w > 0.0)) {
            return Err(CliError::Config("detector.window_lengths must be positive".into()));
        }
        if !(self.detector.train_fraction > 0.0 && self.detector.train_fraction < 1.0) {
            return Err(CliError::Config("detector.train_fraction must be in (0, 1)".into()));
        }
        if self.detector.class_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(CliError::Config("detector.class_weights must be positive".into()));
        }
        Ok(())
    }

    fn smoothing_check(&self) -> Result<(), CliError> {
        foveaprobe_core::inference::Smoother::new(&self.smoothing)
            .map(|_| ())
            .map_err(|e| CliError::Config(format!("smoothing: {e}")))
    }

    /// Frame-rate targets used to group logs.
    pub fn fps_targets(&self) -> &[f64] {
        &self.sweep.fps
    }

    /// Target nearest to `fps`.
    pub fn nearest_target(&self, fps: f64) -> f64 {
        nearest(self.fps_targets(), fps)
    }

    pub fn gaze_path(&self) -> Option<PathBuf> {
        (self.gaze.source == GazeSource::File).then(|| PathBuf::from(&self.gaze.path))
    }
}

pub fn nearest(targets: &[f64], v: f64) -> f64 {
    targets
        .iter()
        .copied()
        .min_by(|a, b| (a - v).abs().total_cmp(&(b - v).abs()))
        .unwrap_or(v)
}

/// Recursively overlays `user` onto `base`. Keys absent from `base` are
/// rejected; nested tables merge, everything else is replaced.
fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<(), CliError> {
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(CliError::Config(format!("unknown key '{path}'"))),
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src, &path)?,
            (Some(Value::Table(_)), other) => {
                return Err(CliError::Config(format!("'{path}' must be a table, got {}", other.type_str())))
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}
