use foveaprobe_core::detector::{feature_rows, fit_kmeans, DetectorConfig, FeatureSet};
use foveaprobe_core::inference::{run_inference, Fov, OffsetModel};
use foveaprobe_core::profile::Profile;
use foveaprobe_core::sim::{simulate_session, synthetic_gaze_trace};
use foveaprobe_core::trace::{group_scans, read_log_csv, write_log_csv, Gaze, GazeTrace, SessionLog};

fn session(profile: Profile, seed: u64, duration: f64) -> SessionLog {
    let cfg = profile.session_config(duration, seed);
    let f = &cfg.foveation;
    let trace = synthetic_gaze_trace(duration, f.fov_x, f.fov_y, profile.gaze_extent(), 250.0, seed);
    simulate_session(&trace, &cfg).unwrap()
}

#[test]
fn same_seed_same_log() {
    assert_eq!(session(Profile::Desktop, 7, 3.0), session(Profile::Desktop, 7, 3.0));
    assert_ne!(session(Profile::Desktop, 7, 3.0), session(Profile::Desktop, 8, 3.0));
}

#[test]
fn csv_round_trip() {
    for profile in Profile::ALL {
        let log = session(profile, 3, 3.0);
        let mut buf = Vec::new();
        write_log_csv(&log, &mut buf).unwrap();
        let back = read_log_csv(buf.as_slice(), profile.polarity()).unwrap();
        assert_eq!(back.len(), log.len());
        for (a, b) in back.records().iter().zip(log.records()) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert!((a.metric - b.metric).abs() < 1e-9 * b.metric.abs().max(1.0));
            assert_eq!((a.axis, a.scan_id), (b.axis, b.scan_id));
        }
    }
}

#[test]
fn scans_alternate_axes() {
    let log = session(Profile::Desktop, 1, 4.0);
    let scans = group_scans(&log).unwrap();
    assert!(scans.len() >= 15);
    for w in scans.windows(2) {
        assert_ne!(w[0].axis, w[1].axis);
    }
}

#[test]
fn fixed_gaze_recovered_within_a_few_degrees() {
    let profile = Profile::Desktop;
    let mut cfg = profile.session_config(4.0, 11);
    cfg.cost.noise.sigma = 0.0;
    let gaze = Gaze::new(10.0, -5.0);
    let log = simulate_session(&GazeTrace::fixed(gaze, 4.0), &cfg).unwrap();
    let fov = Fov {
        x: cfg.foveation.fov_x,
        y: cfg.foveation.fov_y,
    };
    let raw = run_inference(&log, &profile.smoothing(), &OffsetModel::IDENTITY, fov).unwrap();
    let model = foveaprobe_core::inference::calibrate_constant(&raw.estimates).unwrap();
    let out = run_inference(&log, &profile.smoothing(), &model, fov).unwrap();
    assert!(!out.samples.is_empty());
    let (mx, my) = out.samples.iter().fold((0.0, 0.0), |(x, y), s| {
        let (ex, ey) = s.abs_error().unwrap();
        (x + ex, y + ey)
    });
    let n = out.samples.len() as f64;
    assert!(mx / n < 3.0 && my / n < 3.0, "{} {}", mx / n, my / n);
}

#[test]
fn attacked_windows_separate_from_idle_ones() {
    let mut logs = Vec::new();
    for seed in 0..4 {
        let mut cfg = Profile::Desktop.session_config(6.0, seed);
        let f = &cfg.foveation;
        let trace = synthetic_gaze_trace(6.0, f.fov_x, f.fov_y, 0.6, 250.0, seed);
        logs.push(simulate_session(&trace, &cfg).unwrap());
        cfg.schedule.active = false;
        logs.push(simulate_session(&trace, &cfg).unwrap());
    }
    let (rows, _) = feature_rows(&logs, &DetectorConfig::default()).unwrap();
    assert!(rows.iter().any(|r| r.label) && rows.iter().any(|r| !r.label));
    let feats: Vec<_> = rows.iter().map(|r| r.features).collect();
    let model = fit_kmeans(&feats, FeatureSet::SdOutlier, 0).unwrap();
    let correct = rows.iter().filter(|r| model.predict(&r.features) == r.label).count();
    assert!(correct as f64 / rows.len() as f64 > 0.9, "{correct} of {}", rows.len());
}
