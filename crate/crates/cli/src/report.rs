use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::io::{num, write_atomic, write_csv};
use crate::svg::{line_chart, Series};
use crate::FpsKey;

/// Seconds of the gaze trace shown in the plot.
const GAZE_PLOT_SPAN: f64 = 10.0;

/// What a report run produced and which inputs it could not find.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOutcome {
    pub written: Vec<PathBuf>,
    pub missing: Vec<PathBuf>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Option<Table>, CliError> {
        if !path.is_file() {
            return Ok(None);
        }
        let bad = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(bad)?;
        let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(bad)?;
        Ok(Some(Table { header, rows }))
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column '{name}' missing")))
    }

    fn float(row: &[String], i: usize) -> Option<f64> {
        row.get(i).and_then(|v| v.parse().ok())
    }
}

#[derive(Default)]
struct Acc {
    logs: usize,
    n: f64,
    sum_x: f64,
    sum_y: f64,
}

impl Acc {
    fn add(&mut self, n: f64, mx: f64, my: f64) {
        self.logs += 1;
        self.n += n;
        self.sum_x += n * mx;
        self.sum_y += n * my;
    }

    fn means(&self) -> (f64, f64) {
        (self.sum_x / self.n, self.sum_y / self.n)
    }
}

fn error_tables(summary: &Table, out: &Path, done: &mut ReportOutcome) -> Result<(), CliError> {
    let (c_fps, c_str, c_ts) = (summary.col("fps")?, summary.col("foveation_strength")?, summary.col("t_scan_s")?);
    let (c_n, c_x, c_y) = (summary.col("samples")?, summary.col("mae_x_deg")?, summary.col("mae_y_deg")?);
    let mut by_fps: BTreeMap<(String, FpsKey), Acc> = BTreeMap::new();
    let mut by_ts: BTreeMap<FpsKey, Acc> = BTreeMap::new();
    for row in &summary.rows {
        let (Some(n), Some(mx), Some(my)) = (Table::float(row, c_n), Table::float(row, c_x), Table::float(row, c_y)) else {
            continue;
        };
        if n <= 0.0 {
            continue;
        }
        if let Some(fps) = Table::float(row, c_fps) {
            by_fps.entry((row[c_str].clone(), FpsKey(fps))).or_default().add(n, mx, my);
        }
        if let Some(ts) = Table::float(row, c_ts) {
            by_ts.entry(FpsKey(ts)).or_default().add(n, mx, my);
        }
    }

    let mut rows = Vec::new();
    let mut lines: BTreeMap<String, (Vec<(f64, f64)>, Vec<(f64, f64)>)> = BTreeMap::new();
    for ((strength, fps), acc) in &by_fps {
        let (mx, my) = acc.means();
        rows.push(vec![
            strength.clone(),
            num(fps.0),
            acc.logs.to_string(),
            (acc.n as usize).to_string(),
            num(mx),
            num(my),
        ]);
        let e = lines.entry(strength.clone()).or_default();
        e.0.push((fps.0, mx));
        e.1.push((fps.0, my));
    }
    let p = out.join("error_by_fps.csv");
    write_csv(
        &p,
        &["foveation_strength", "fps", "logs", "samples", "mae_x_deg", "mae_y_deg"],
        &rows,
    )?;
    done.written.push(p);
    let mut series = Vec::new();
    for (strength, (x, y)) in lines {
        let tag = if strength.is_empty() { String::new() } else { format!(" (strength {strength})") };
        series.push(Series::new(format!("X{tag}"), x));
        series.push(Series::new(format!("Y{tag}"), y).dashed());
    }
    let p = out.join("error_vs_fps.svg");
    write_atomic(
        &p,
        line_chart("Gaze error vs frame rate", "frame rate (FPS)", "mean |error| (deg)", &series).as_bytes(),
    )?;
    done.written.push(p);

    let mut rows = Vec::new();
    let (mut sx, mut sy) = (Vec::new(), Vec::new());
    for (ts, acc) in &by_ts {
        let (mx, my) = acc.means();
        rows.push(vec![num(ts.0), acc.logs.to_string(), (acc.n as usize).to_string(), num(mx), num(my)]);
        sx.push((ts.0 * 1000.0, mx));
        sy.push((ts.0 * 1000.0, my));
    }
    let p = out.join("error_by_scan_time.csv");
    write_csv(&p, &["t_scan_s", "logs", "samples", "mae_x_deg", "mae_y_deg"], &rows)?;
    done.written.push(p);
    let p = out.join("error_vs_scan_time.svg");
    write_atomic(
        &p,
        line_chart(
            "Gaze error vs scan time",
            "scan time (ms)",
            "mean |error| (deg)",
            &[Series::new("X", sx), Series::new("Y", sy).dashed()],
        )
        .as_bytes(),
    )?;
    done.written.push(p);
    Ok(())
}

fn f1_table(study: &Table, out: &Path, done: &mut ReportOutcome) -> Result<(), CliError> {
    let (c_fps, c_len, c_n, c_f1) = (study.col("fps")?, study.col("window_len_s")?, study.col("windows")?, study.col("f1")?);
    let mut rows = Vec::new();
    let mut lines: BTreeMap<FpsKey, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &study.rows {
        let (Some(fps), Some(len)) = (Table::float(row, c_fps), Table::float(row, c_len)) else {
            continue;
        };
        rows.push(vec![num(fps), num(len), row[c_n].clone(), row[c_f1].clone()]);
        if let Some(f1) = Table::float(row, c_f1) {
            lines.entry(FpsKey(fps)).or_default().push((len, f1));
        }
    }
    let p = out.join("f1_by_window.csv");
    write_csv(&p, &["fps", "window_len_s", "windows", "f1"], &rows)?;
    done.written.push(p);
    let series: Vec<Series> = lines.into_iter().map(|(fps, pts)| Series::new(format!("{} FPS", fps.0), pts)).collect();
    let p = out.join("f1_vs_window.svg");
    write_atomic(
        &p,
        line_chart("Detector F1 vs window length", "window length (s)", "F1", &series).as_bytes(),
    )?;
    done.written.push(p);
    Ok(())
}

fn gaze_plot(infer_dir: &Path, out: &Path, done: &mut ReportOutcome) -> Result<bool, CliError> {
    let Ok(entries) = fs::read_dir(infer_dir) else {
        return Ok(false);
    };
    let mut preds: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_pred.csv")))
        .collect();
    preds.sort();
    let mut chosen = None;
    for p in &preds {
        let Some(t) = Table::read(p)? else { continue };
        let has_gt = t.rows.iter().any(|r| r.get(3).is_some_and(|v| !v.is_empty()));
        if chosen.is_none() || has_gt {
            chosen = Some((p.clone(), t));
        }
        if has_gt {
            break;
        }
    }
    let Some((path, t)) = chosen else {
        return Ok(false);
    };
    let mut cols: [Vec<(f64, f64)>; 4] = Default::default();
    let t_start = t.rows.iter().find_map(|r| Table::float(r, 0)).unwrap_or(0.0);
    for r in &t.rows {
        let Some(ts) = Table::float(r, 0) else { continue };
        if ts > t_start + GAZE_PLOT_SPAN {
            break;
        }
        for (k, c) in [1, 3, 2, 4].into_iter().enumerate() {
            if let Some(v) = Table::float(r, c) {
                cols[k].push((ts, v));
            }
        }
    }
    let [px, gx, py, gy] = cols;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().trim_end_matches("_pred.csv");
    let series = vec![
        Series::new("predicted X", px),
        Series::new("true X", gx).dashed(),
        Series::new("predicted Y", py),
        Series::new("true Y", gy).dashed(),
    ];
    let p = out.join("gaze_trace.svg");
    write_atomic(
        &p,
        line_chart(&format!("Predicted vs true gaze: {name}"), "time (s)", "angle (deg)", &series).as_bytes(),
    )?;
    done.written.push(p);
    Ok(true)
}

/// Builds summary tables and plots under `<dir>/report` from the infer and
/// detect outputs in `dir`. Whatever inputs exist are used; the rest are
/// returned as missing.
pub fn cmd_report(dir: &Path) -> Result<ReportOutcome, CliError> {
    let out = dir.join("report");
    let mut done = ReportOutcome::default();
    let summary = dir.join("infer").join("summary.csv");
    match Table::read(&summary)? {
        Some(t) => error_tables(&t, &out, &mut done)?,
        None => done.missing.push(summary),
    }
    let study = dir.join("detect").join("f1_vs_window.csv");
    match Table::read(&study)? {
        Some(t) => f1_table(&t, &out, &mut done)?,
        None => done.missing.push(study),
    }
    if !gaze_plot(&dir.join("infer"), &out, &mut done)? {
        done.missing.push(dir.join("infer").join("*_pred.csv"));
    }
    Ok(done)
}
