//! Session-log data model: per-frame records, scan windows, gaze samples,
//! log validation, scan grouping and the session-log CSV format.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact header of the session-log CSV.
pub const LOG_HEADER: [&str; 7] = [
    "t_s",
    "metric",
    "hco_angle_deg",
    "axis",
    "scan_id",
    "gt_x_deg",
    "gt_y_deg",
];

/// Exact header of the gaze-trace CSV.
pub const GAZE_HEADER: [&str; 3] = ["t_s", "x_deg", "y_deg"];

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("log is empty")]
    Empty,
    #[error("timestamp not strictly increasing at record {index}")]
    NonMonotonicTime { index: usize },
    #[error("metric must be positive and finite at record {index}")]
    NonPositiveMetric { index: usize },
    #[error("scan id decreases at record {index}")]
    ScanIdRegression { index: usize },
    #[error("scan id must be a positive integer at record {index}")]
    InvalidScanId { index: usize },
    #[error("axis changes inside a scan at record {index}")]
    MixedAxisInScan { index: usize },
    #[error("hco angle not monotonic inside a scan at record {index}")]
    NonMonotonicAngle { index: usize },
    #[error("non-finite value at record {index}")]
    NonFinite { index: usize },
    #[error("consecutive scans {prev_scan} and {scan} share an axis (expected X, Y, X, ...)")]
    AxisAlternationViolation { prev_scan: u64, scan: u64 },
    #[error("gaze trace is empty")]
    EmptyTrace,
    #[error("gaze trace not time-sorted at sample {index}")]
    UnsortedTrace { index: usize },
    #[error("bad CSV header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<csv::Error> for TraceError {
    fn from(e: csv::Error) -> Self {
        TraceError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for TraceError {
    fn from(e: std::io::Error) -> Self {
        TraceError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X" => Ok(Axis::X),
            "Y" => Ok(Axis::Y),
            other => Err(format!("axis must be X or Y, got `{other}`")),
        }
    }
}

/// Whether extra GPU load raises the logged metric (frame time) or lowers
/// it (frame rate, inverse GPU time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricPolarity {
    LoadIncreasesMetric,
    LoadDecreasesMetric,
}

/// A point in view angles (degrees). X positive rightward, Y positive upward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Gaze {
    pub x: f64,
    pub y: f64,
}

impl Gaze {
    pub const fn new(x: f64, y: f64) -> Self {
        Gaze { x, y }
    }

    pub fn component(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

/// One logged frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    /// Seconds since session start.
    pub t: f64,
    /// Frame time (ms) or frame rate (frames/s), see [`MetricPolarity`].
    pub metric: f64,
    /// HCO position along the active axis, degrees.
    pub hco_angle: f64,
    pub axis: Axis,
    pub scan_id: u64,
    pub gt_gaze: Option<Gaze>,
}

/// A log whose records satisfy every [`FrameRecord`] invariant.
/// Only constructible through [`validate_log`].
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    records: Vec<FrameRecord>,
    polarity: MetricPolarity,
    generator: Option<String>,
}

impl SessionLog {
    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn polarity(&self) -> MetricPolarity {
        self.polarity
    }

    pub fn generator(&self) -> Option<&str> {
        self.generator.as_deref()
    }

    pub fn with_generator(mut self, name: impl Into<String>) -> Self {
        self.generator = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.records.iter().all(|r| r.gt_gaze.is_some())
    }

    pub fn duration(&self) -> f64 {
        let first = self.records[0].t;
        let last = self.records[self.records.len() - 1].t;
        last - first
    }

    /// Mean frame rate in frames per second, derived from the metric.
    pub fn mean_frame_rate(&self) -> f64 {
        let n = self.records.len() as f64;
        match self.polarity {
            MetricPolarity::LoadIncreasesMetric => {
                let mean_ms = self.records.iter().map(|r| r.metric).sum::<f64>() / n;
                1000.0 / mean_ms
            }
            MetricPolarity::LoadDecreasesMetric => {
                // harmonic: frame durations are 1000/metric
                let mean_ms = self.records.iter().map(|r| 1000.0 / r.metric).sum::<f64>() / n;
                1000.0 / mean_ms
            }
        }
    }
}

/// Frames logged during one sweep of the HCO.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanWindow<'a> {
    pub scan_id: u64,
    pub axis: Axis,
    /// Index of the first frame in the session log.
    pub start: usize,
    pub frames: &'a [FrameRecord],
}

impl<'a> ScanWindow<'a> {
    pub fn n_w(&self) -> usize {
        self.frames.len()
    }

    pub fn metrics(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.metric).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.frames[self.frames.len() - 1].t
    }
}

/// Time-stamped gaze estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl GazeSample {
    /// Clamps the position to the FOV half-extents.
    pub fn clamped(t: f64, x: f64, y: f64, fov_x: f64, fov_y: f64) -> Self {
        GazeSample {
            t,
            x: x.clamp(-fov_x / 2.0, fov_x / 2.0),
            y: y.clamp(-fov_y / 2.0, fov_y / 2.0),
        }
    }
}

/// Checks every record invariant and returns the validated log, or the first
/// violation found.
pub fn validate_log(
    records: Vec<FrameRecord>,
    polarity: MetricPolarity,
) -> Result<SessionLog, TraceError> {
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    for (index, r) in records.iter().enumerate() {
        let finite = r.t.is_finite()
            && r.hco_angle.is_finite()
            && r.gt_gaze.is_none_or(|g| g.x.is_finite() && g.y.is_finite());
        if !finite {
            return Err(TraceError::NonFinite { index });
        }
        if !(r.metric > 0.0) || !r.metric.is_finite() {
            return Err(TraceError::NonPositiveMetric { index });
        }
        if r.scan_id == 0 {
            return Err(TraceError::InvalidScanId { index });
        }
        if index == 0 {
            continue;
        }
        let prev = &records[index - 1];
        if !(r.t > prev.t) {
            return Err(TraceError::NonMonotonicTime { index });
        }
        if r.scan_id < prev.scan_id {
            return Err(TraceError::ScanIdRegression { index });
        }
        if r.scan_id == prev.scan_id {
            if r.axis != prev.axis {
                return Err(TraceError::MixedAxisInScan { index });
            }
            if r.hco_angle < prev.hco_angle {
                return Err(TraceError::NonMonotonicAngle { index });
            }
        }
    }
    Ok(SessionLog {
        records,
        polarity,
        generator: None,
    })
}

/// Splits a validated log into scan windows, one per maximal run of equal
/// scan id. Windows must alternate X, Y, X, ... starting with X.
pub fn group_scans(log: &SessionLog) -> Result<Vec<ScanWindow<'_>>, TraceError> {
    let records = log.records();
    let mut windows: Vec<ScanWindow<'_>> = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].scan_id != records[start].scan_id {
            windows.push(ScanWindow {
                scan_id: records[start].scan_id,
                axis: records[start].axis,
                start,
                frames: &records[start..i],
            });
            start = i;
        }
    }
    let mut expected = Axis::X;
    let mut prev_scan = 0;
    for w in &windows {
        if w.axis != expected {
            return Err(TraceError::AxisAlternationViolation {
                prev_scan,
                scan: w.scan_id,
            });
        }
        prev_scan = w.scan_id;
        expected = expected.other();
    }
    Ok(windows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a session log as CSV. Floats use the shortest representation that
/// parses back to the same value, so write → read → write is byte-identical.
pub fn write_log_csv<W: Write>(log: &SessionLog, mut out: W) -> Result<(), TraceError> {
    if let Some(g) = log.generator() {
        writeln!(out, "# generator: {g}")?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in log.records() {
        w.write_record([
            r.t.to_string(),
            r.metric.to_string(),
            r.hco_angle.to_string(),
            r.axis.to_string(),
            r.scan_id.to_string(),
            fmt_opt(r.gt_gaze.map(|g| g.x)),
            fmt_opt(r.gt_gaze.map(|g| g.y)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Splits leading `#` comment lines from the CSV body.
fn split_preamble(text: &str) -> (Vec<&str>, &str, usize) {
    let mut comments = Vec::new();
    let mut rest = text;
    let mut skipped = 0;
    while rest.starts_with('#') {
        let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
        comments.push(rest[..end].trim_end_matches(['\n', '\r']));
        rest = &rest[end..];
        skipped += 1;
    }
    (comments, rest, skipped)
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64, TraceError> {
    s.trim().parse::<f64>().map_err(|_| TraceError::Parse {
        line,
        reason: format!("column {col}: cannot parse `{s}` as a number"),
    })
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), TraceError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(TraceError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

/// Parses session-log CSV text into raw (unvalidated) records plus the
/// optional generator name from a `# generator:` comment.
pub fn parse_log_records(text: &str) -> Result<(Vec<FrameRecord>, Option<String>), TraceError> {
    let (comments, body, skipped) = split_preamble(text);
    let generator = comments
        .iter()
        .find_map(|c| c.strip_prefix("# generator:").map(|g| g.trim().to_string()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(body.as_bytes());
    check_header(rdr.headers()?, &LOG_HEADER)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = skipped + i + 2;
        let t = parse_f64(&row[0], line, "t_s")?;
        let metric = parse_f64(&row[1], line, "metric")?;
        let hco_angle = parse_f64(&row[2], line, "hco_angle_deg")?;
        let axis = row[3]
            .parse::<Axis>()
            .map_err(|reason| TraceError::Parse { line, reason })?;
        let scan_id = row[4].trim().parse::<u64>().map_err(|_| TraceError::Parse {
            line,
            reason: format!("column scan_id: `{}` is not a non-negative integer", &row[4]),
        })?;
        let gt_gaze = match (row[5].trim(), row[6].trim()) {
            ("", "") => None,
            (x, y) if !x.is_empty() && !y.is_empty() => Some(Gaze::new(
                parse_f64(x, line, "gt_x_deg")?,
                parse_f64(y, line, "gt_y_deg")?,
            )),
            _ => {
                return Err(TraceError::Parse {
                    line,
                    reason: "ground-truth columns must be both present or both empty".into(),
                })
            }
        };
        records.push(FrameRecord {
            t,
            metric,
            hco_angle,
            axis,
            scan_id,
            gt_gaze,
        });
    }
    Ok((records, generator))
}

/// Reads and validates a session log.
pub fn read_log_csv<R: Read>(
    mut input: R,
    polarity: MetricPolarity,
) -> Result<SessionLog, TraceError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (records, generator) = parse_log_records(&text)?;
    let mut log = validate_log(records, polarity)?;
    log.generator = generator;
    Ok(log)
}

/// A gaze sample of a ground-truth trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub gaze: Gaze,
}

/// A time-sorted gaze trace, queried with zero-order hold.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeTrace {
    points: Vec<TracePoint>,
}

impl GazeTrace {
    pub fn new(points: Vec<TracePoint>) -> Result<Self, TraceError> {
        if points.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        for (index, w) in points.windows(2).enumerate() {
            if !(w[1].t >= w[0].t) {
                return Err(TraceError::UnsortedTrace { index: index + 1 });
            }
        }
        Ok(GazeTrace { points })
    }

    /// Single fixed gaze point held over `[0, duration]`.
    pub fn fixed(gaze: Gaze, duration: f64) -> Self {
        GazeTrace {
            points: vec![
                TracePoint { t: 0.0, gaze },
                TracePoint { t: duration, gaze },
            ],
        }
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].t
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Most recent sample at or before `t`; the first sample before the trace starts.
    pub fn at(&self, t: f64) -> Gaze {
        let idx = self.points.partition_point(|p| p.t <= t);
        if idx == 0 {
            self.points[0].gaze
        } else {
            self.points[idx - 1].gaze
        }
    }
}

pub fn read_gaze_csv<R: Read>(input: R) -> Result<GazeTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(input);
    check_header(rdr.headers()?, &GAZE_HEADER)?;
    let mut points = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        points.push(TracePoint {
            t: parse_f64(&row[0], line, "t_s")?,
            gaze: Gaze::new(
                parse_f64(&row[1], line, "x_deg")?,
                parse_f64(&row[2], line, "y_deg")?,
            ),
        });
    }
    GazeTrace::new(points)
}

pub fn write_gaze_csv<W: Write>(trace: &GazeTrace, out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(GAZE_HEADER)?;
    for p in trace.points() {
        w.write_record([p.t.to_string(), p.gaze.x.to_string(), p.gaze.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
