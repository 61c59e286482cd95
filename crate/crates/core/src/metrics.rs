//! Run records, the JSON-lines event log, the pointing task, and summary tables.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beacon::PulseSide;
use crate::engine::Condition;
use crate::geo::{bearing_deg, signed_delta};
use crate::instructor::{BBox, LandmarkSide};
use crate::route::Route;
use crate::stats::{summarize, Summary};
use crate::tracking::{DeviationInterval, PoseSample, TrackerState};
use crate::HeadingDeg;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("pointing needs at least two POIs, route has {0}")]
    TooFewPois(usize),
    #[error("expected {expected} pointing headings, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("log line {line}: {msg}")]
    Log { line: usize, msg: String },
    #[error("no run records")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of one walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub route_id: String,
    pub condition: Condition,
    pub seed: u64,
    /// Ground-truth length of the path walked.
    pub distance_walked_m: f64,
    pub deviation_count: usize,
    pub deviation_intervals: Vec<DeviationInterval>,
    /// Deviations that began on the way into or out of the dead end.
    pub dead_end_deviations: usize,
    pub pointing_errors_deg: Vec<f64>,
    pub latency_samples_s: Vec<f64>,
    pub completed: bool,
    pub duration_s: f64,
    /// Why the run stopped early; present whenever `completed` is false.
    pub note: Option<String>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes")
    }
}

/// Counts the intervals that started while the dead end, or the step leading back
/// out of it, was the current waypoint.
pub fn dead_end_deviations(route: &Route, intervals: &[DeviationInterval]) -> usize {
    let Some(d) = route.dead_end_index else { return 0 };
    intervals.iter().filter(|iv| iv.waypoint_index == d || iv.waypoint_index == d + 1).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconPayload {
    pub azimuth_deg: f64,
    pub gain_l: f64,
    pub gain_r: f64,
    pub itd_s: f64,
    pub behind: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_side: Option<PulseSide>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtteranceSource {
    Baseline,
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePayload {
    pub text: String,
    pub latency_s: f64,
    pub waypoint_index: usize,
    pub source: UtteranceSource,
    #[serde(default)]
    pub landmark: Option<String>,
    #[serde(default)]
    pub side: Option<LandmarkSide>,
    #[serde(default)]
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEndPayload {
    pub record: RunRecord,
    pub tracker: TrackerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum LogEvent {
    Pose(PoseSample),
    TurnReached { waypoint_index: usize },
    DeviationStart { waypoint_index: usize, off_m: f64 },
    DeviationEnd { max_off_m: f64 },
    BeaconOn(BeaconPayload),
    BeaconOff {},
    PromptFired { scenario: u8, waypoint_index: usize },
    Utterance(UtterancePayload),
    RunEnd(Box<RunEndPayload>),
}

impl LogEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            LogEvent::Pose(_) => "pose",
            LogEvent::TurnReached { .. } => "turn_reached",
            LogEvent::DeviationStart { .. } => "deviation_start",
            LogEvent::DeviationEnd { .. } => "deviation_end",
            LogEvent::BeaconOn(_) => "beacon_on",
            LogEvent::BeaconOff {} => "beacon_off",
            LogEvent::PromptFired { .. } => "prompt_fired",
            LogEvent::Utterance(_) => "utterance",
            LogEvent::RunEnd(_) => "run_end",
        }
    }
}

/// One log line: `{"t": .., "kind": .., "payload": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: LogEvent,
}

pub fn write_log(mut w: impl Write, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn log_to_string(records: &[LogRecord]) -> String {
    let mut buf = Vec::new();
    write_log(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_log(r: impl BufRead) -> Result<Vec<LogRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| MetricsError::Log { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// The run's summary record, if the log has one.
pub fn run_end(records: &[LogRecord]) -> Option<&RunEndPayload> {
    records.iter().rev().find_map(|r| match &r.event {
        LogEvent::RunEnd(p) => Some(p.as_ref()),
        _ => None,
    })
}

/// End-of-route pointing probe: from the final POI toward every earlier one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingTask {
    pub origin: String,
    pub targets: Vec<String>,
    pub true_bearings: Vec<HeadingDeg>,
}

pub fn pointing_truth(route: &Route) -> Result<PointingTask, MetricsError> {
    let n = route.pois.len();
    if n < 2 {
        return Err(MetricsError::TooFewPois(n));
    }
    let origin = &route.pois[n - 1];
    let targets = &route.pois[..n - 1];
    Ok(PointingTask {
        origin: origin.name.clone(),
        targets: targets.iter().map(|p| p.name.clone()).collect(),
        true_bearings: targets.iter().map(|p| bearing_deg(origin.pos, p.pos).unwrap_or_default()).collect(),
    })
}

/// Absolute angular error per target, in `[0, 180]`.
pub fn pointing_error(task: &PointingTask, pointed: &[HeadingDeg]) -> Result<Vec<f64>, MetricsError> {
    if pointed.len() != task.true_bearings.len() {
        return Err(MetricsError::LengthMismatch { expected: task.true_bearings.len(), got: pointed.len() });
    }
    Ok(task.true_bearings.iter().zip(pointed).map(|(&truth, &p)| signed_delta(p, truth).abs()).collect())
}

pub const CSV_HEADER: &str = "condition,route,measure,min,q1,median,q3,max,mean,sd";

pub const MEASURES: [&str; 4] = ["distance_walked_m", "deviation_count", "dead_end_deviations", "pointing_error_deg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: Condition,
    pub route: String,
    pub measure: String,
    #[serde(flatten)]
    pub summary: Summary<f64>,
}

fn measure_values(measure: &str, rs: &[&RunRecord]) -> Vec<f64> {
    match measure {
        "distance_walked_m" => rs.iter().map(|r| r.distance_walked_m).collect(),
        "deviation_count" => rs.iter().map(|r| r.deviation_count as f64).collect(),
        "dead_end_deviations" => rs.iter().map(|r| r.dead_end_deviations as f64).collect(),
        "pointing_error_deg" => rs.iter().flat_map(|r| r.pointing_errors_deg.iter().copied()).collect(),
        _ => Vec::new(),
    }
}

/// Per condition × route × measure summaries. Rows are sorted so the output does
/// not depend on record order; cells with no values are left out.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<SummaryRow>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cells: BTreeMap<(Condition, &str), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.condition, r.route_id.as_str())).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((condition, route), rs) in cells {
        for measure in MEASURES {
            // summarize sorts first, so sums do not depend on record order
            match summarize(&measure_values(measure, &rs)) {
                Some(summary) => {
                    rows.push(SummaryRow { condition, route: route.to_string(), measure: measure.to_string(), summary })
                }
                None => tracing::warn!(%condition, route, measure, "no values; row omitted"),
            }
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.condition, r.route, r.measure, s.min, s.q1, s.median, s.q3, s.max, s.mean, s.sd
        ));
    }
    out
}

pub fn rows_to_json(rows: &[SummaryRow]) -> String {
    serde_json::to_string_pretty(rows).expect("summary rows serialize")
}
