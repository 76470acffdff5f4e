use std::collections::BTreeMap;
use std::path::Path;

use foveaprobe_core::detector::{
    evaluate_detector, feature_rows, fit_kmeans, train_logistic, window_length_study, DetectionMetrics, DetectorError,
    FeatureRow, KMeansModel, LogisticConfig, LogisticModel, FEATURES_HEADER,
};
use foveaprobe_core::profile::Profile;
use foveaprobe_core::trace::SessionLog;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{nearest, DetectSettings, ExperimentConfig};
use crate::error::{compute, CliError};
use crate::io::{load_logs, num, write_atomic, write_csv};
use crate::{group_fps, FpsKey};

pub const DETECTION_HEADER: [&str; 8] = [
    "file",
    "fps",
    "window_start_s",
    "window_len_s",
    "label",
    "kmeans_pred",
    "logistic_prob",
    "logistic_pred",
];
pub const SUMMARY_HEADER: [&str; 11] = [
    "method", "scope", "windows", "positives", "tp", "fp", "tn", "fn", "precision", "recall", "f1",
];
pub const STUDY_HEADER: [&str; 6] = ["fps", "window_len_s", "windows", "positives", "f1", "note"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansGroup {
    pub fps: f64,
    pub model: KMeansModel,
}

/// Trained detectors: one 2-means model per frame-rate group and an
/// optional pooled logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModelFile {
    pub profile: Profile,
    pub config: DetectSettings,
    pub kmeans: Vec<KMeansGroup>,
    pub logistic: Option<LogisticModel>,
}

impl DetectorModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
            what: "detector model",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn kmeans_for(&self, fps: f64) -> Option<&KMeansModel> {
        let targets: Vec<f64> = self.kmeans.iter().map(|g| g.fps).collect();
        let f = nearest(&targets, fps);
        self.kmeans.iter().find(|g| g.fps == f).map(|g| &g.model)
    }
}

/// Headline scores of one detect run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectSummary {
    pub windows: usize,
    pub skipped: usize,
    pub kmeans: DetectionMetrics,
    pub kmeans_by_fps: Vec<(f64, DetectionMetrics)>,
    /// Held-out scores when the model was trained here, all windows otherwise.
    pub logistic: Option<DetectionMetrics>,
    pub study: Vec<(f64, Vec<foveaprobe_core::detector::StudyRow>)>,
}

struct Row {
    file: usize,
    fps: f64,
    feat: FeatureRow,
}

fn metrics_row(method: &str, scope: String, m: &DetectionMetrics) -> Vec<String> {
    vec![
        method.to_string(),
        scope,
        (m.tp + m.fp + m.tn + m.fn_).to_string(),
        (m.tp + m.fn_).to_string(),
        m.tp.to_string(),
        m.fp.to_string(),
        m.tn.to_string(),
        m.fn_.to_string(),
        num(m.precision),
        num(m.recall),
        if m.f1_defined() { num(m.f1) } else { String::new() },
    ]
}

/// Extracts window features from every log, fits (or loads) the detectors,
/// and writes features, per-window predictions, the model, a summary and the
/// window-length study under `<out>/detect`.
pub fn cmd_detect(
    cfg: &ExperimentConfig,
    logs_dir: &Path,
    model: Option<&DetectorModelFile>,
    out: &Path,
) -> Result<DetectSummary, CliError> {
    let logs = load_logs(logs_dir, cfg.profile.polarity())?;
    let dcfg = cfg.detector.detector_config();
    let seed = cfg.seeds[0];
    let per_log: Vec<(Vec<FeatureRow>, usize)> = logs
        .par_iter()
        .map(|l| feature_rows(std::slice::from_ref(&l.log), &dcfg).map_err(compute(format!("features of {}", l.name))))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (i, (feats, sk)) in per_log.into_iter().enumerate() {
        skipped += sk;
        let fps = group_fps(cfg, &logs[i]);
        rows.extend(feats.into_iter().map(|feat| Row { file: i, fps, feat }));
    }
    if rows.is_empty() {
        return Err(CliError::Compute(anyhow::anyhow!(
            "no complete {} s windows in {}",
            dcfg.window_len,
            logs_dir.display()
        )));
    }

    let mut groups: BTreeMap<FpsKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(FpsKey(r.fps)).or_default().push(i);
    }

    let (model, logistic_scores) = match model {
        Some(m) => (m.clone(), None),
        None => {
            let kmeans = groups
                .iter()
                .map(|(fps, idx)| {
                    let feats: Vec<_> = idx.iter().map(|&i| rows[i].feat.features).collect();
                    fit_kmeans(&feats, cfg.detector.features, seed)
                        .map(|model| KMeansGroup { fps: fps.0, model })
                        .map_err(compute(format!("k-means at {} FPS", fps.0)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let samples: Vec<_> = rows.iter().map(|r| (r.feat.features, r.feat.label)).collect();
            let lcfg = LogisticConfig {
                features: cfg.detector.features,
                l2: cfg.detector.l2,
                train_fraction: cfg.detector.train_fraction,
                class_weights: Some((cfg.detector.class_weights[0], cfg.detector.class_weights[1])),
                seed,
                ..LogisticConfig::default()
            };
            let (logistic, scores) = match train_logistic(&samples, &lcfg) {
                Ok(o) => (Some(o.fit.model), Some(o.test_metrics)),
                Err(DetectorError::SingleClass) => {
                    log::warn!("all windows share one label; logistic model skipped");
                    (None, None)
                }
                Err(e) => return Err(compute("logistic regression")(e)),
            };
            (
                DetectorModelFile {
                    profile: cfg.profile,
                    config: cfg.detector.clone(),
                    kmeans,
                    logistic,
                },
                scores,
            )
        }
    };

    let mut detection = Vec::with_capacity(rows.len());
    let mut km_pred = Vec::with_capacity(rows.len());
    let mut lg_pred = Vec::with_capacity(rows.len());
    for r in &rows {
        let km = model
            .kmeans_for(r.fps)
            .ok_or_else(|| CliError::Config("detector model has no k-means groups".into()))?;
        let k = km.predict(&r.feat.features);
        let prob = model.logistic.as_ref().map(|m| m.probability(&r.feat.features));
        km_pred.push(k);
        if let Some(p) = prob {
            lg_pred.push(p >= 0.5);
        }
        detection.push(vec![
            logs[r.file].name.clone(),
            num(r.fps),
            num(r.feat.start),
            num(r.feat.len),
            (r.feat.label as u8).to_string(),
            (k as u8).to_string(),
            prob.map(num).unwrap_or_default(),
            prob.map(|p| ((p >= 0.5) as u8).to_string()).unwrap_or_default(),
        ]);
    }
    let labels: Vec<bool> = rows.iter().map(|r| r.feat.label).collect();
    let kmeans = evaluate_detector(&km_pred, &labels).map_err(compute("scoring"))?;
    let mut kmeans_by_fps = Vec::new();
    let mut summary = vec![metrics_row("kmeans", "all".into(), &kmeans)];
    for (fps, idx) in &groups {
        let p: Vec<bool> = idx.iter().map(|&i| km_pred[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let m = evaluate_detector(&p, &l).map_err(compute("scoring"))?;
        summary.push(metrics_row("kmeans", format!("fps{}", fps.0), &m));
        kmeans_by_fps.push((fps.0, m));
    }
    let logistic = match logistic_scores {
        Some(m) => {
            summary.push(metrics_row("logistic", "held_out".into(), &m));
            Some(m)
        }
        None if model.logistic.is_some() => {
            let m = evaluate_detector(&lg_pred, &labels).map_err(compute("scoring"))?;
            summary.push(metrics_row("logistic", "all".into(), &m));
            Some(m)
        }
        None => None,
    };

    let log_groups: BTreeMap<FpsKey, Vec<SessionLog>> = logs.iter().fold(BTreeMap::new(), |mut acc, l| {
        acc.entry(FpsKey(group_fps(cfg, l))).or_default().push(l.log.clone());
        acc
    });
    let study: Vec<(f64, Vec<_>)> = log_groups
        .par_iter()
        .map(|(fps, group)| {
            window_length_study(group, &cfg.detector.window_lengths, &dcfg, cfg.detector.features, seed)
                .map(|rows| (fps.0, rows))
                .map_err(compute(format!("window study at {} FPS", fps.0)))
        })
        .collect::<Result<_, _>>()?;
    let study_rows: Vec<Vec<String>> = study
        .iter()
        .flat_map(|(fps, rows)| {
            rows.iter().map(move |r| {
                vec![
                    num(*fps),
                    num(r.window_len),
                    r.windows.to_string(),
                    r.positives.to_string(),
                    r.f1().map(num).unwrap_or_default(),
                    r.note.clone().unwrap_or_default(),
                ]
            })
        })
        .collect();

    let feature_csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let f = &r.feat.features;
            vec![
                num(r.feat.start),
                num(r.feat.len),
                num(f.sd),
                num(f.skewness),
                num(f.kurtosis),
                num(f.range),
                num(f.iqr),
                num(f.outlier_prop),
                (r.feat.label as u8).to_string(),
            ]
        })
        .collect();

    let dir = out.join("detect");
    write_csv(&dir.join("features.csv"), &FEATURES_HEADER, &feature_csv)?;
    write_csv(&dir.join("detection.csv"), &DETECTION_HEADER, &detection)?;
    write_csv(&dir.join("detect_summary.csv"), &SUMMARY_HEADER, &summary)?;
    write_csv(&dir.join("f1_vs_window.csv"), &STUDY_HEADER, &study_rows)?;
    let text = toml::to_string(&model).map_err(compute("serializing detector model"))?;
    write_atomic(&dir.join("detector_model.toml"), text.as_bytes())?;

    Ok(DetectSummary {
        windows: rows.len(),
        skipped,
        kmeans,
        kmeans_by_fps,
        logistic,
        study,
    })
}
