//! Wire messages, version 1. Every frame is one JSON object with a `v` field and a
//! `type` tag; the field lists are documented in `docs/protocol.md`.

use nav_core::beacon::{CueKind, MonoPulse};
use nav_core::engine::Condition;
use nav_core::metrics::{RunRecord, UtteranceSource};
use nav_core::tracking::{PoseSample, TrackerState};
use nav_core::BeaconState;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Hello(Hello),
    Input(ClientInput),
    Pointing(PointingSubmission),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    #[default]
    Interactive,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub route: String,
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SessionMode,
    /// Replay only: the JSON-lines event log to play back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    /// Replay only: playback rate relative to real time; 0 plays as fast as possible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_speed: Option<f64>,
}

/// Continuous steering: the server integrates it every tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClientInput {
    pub turn_rate_dps: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingSubmission {
    pub headings_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerMessage {
    pub fn new(body: ServerBody) -> Self {
        Self { v: PROTOCOL_VERSION, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    State(StateUpdate),
    Utterance(UtteranceMsg),
    PointingPrompt(PointingPrompt),
    RunEnd(RunEndMsg),
    Error(ErrorMsg),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseView {
    pub lat: f64,
    pub lon: f64,
    pub heading_deg: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconView {
    pub active: bool,
    pub azimuth_deg: f64,
    pub gain_l: f64,
    pub gain_r: f64,
    pub itd_s: f64,
    pub behind_flag: bool,
    pub cue: CueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<MonoPulse<f64>>,
}

impl From<&BeaconState> for BeaconView {
    fn from(b: &BeaconState) -> Self {
        Self {
            active: b.active,
            azimuth_deg: b.azimuth_deg.value(),
            gain_l: b.render.gain_left,
            gain_r: b.render.gain_right,
            itd_s: b.render.itd_s,
            behind_flag: b.render.behind,
            cue: b.render.cue_kind,
            pulse: b.render.pulse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerView {
    pub waypoint_index: usize,
    pub off_route: bool,
    pub deviation_count: usize,
    pub distance_walked_m: f64,
    pub complete: bool,
}

impl TrackerView {
    pub fn new(t: &TrackerState, complete: bool) -> Self {
        Self {
            waypoint_index: t.current_waypoint_index,
            off_route: t.off_route,
            deviation_count: t.deviation_count,
            distance_walked_m: t.distance_walked_m,
            complete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub t: f64,
    pub pose: PoseView,
    pub beacon: BeaconView,
    pub tracker: TrackerView,
}

impl StateUpdate {
    pub fn new(sample: &PoseSample, beacon: &BeaconState, tracker: TrackerView) -> Self {
        Self {
            t: sample.t,
            pose: PoseView {
                lat: sample.pos.lat_deg,
                lon: sample.pos.lon_deg,
                heading_deg: sample.heading.value(),
                speed_mps: sample.speed_mps,
            },
            beacon: beacon.into(),
            tracker,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMsg {
    pub t: f64,
    pub text: String,
    pub latency_s: f64,
    pub waypoint_index: usize,
    pub source: UtteranceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingPrompt {
    /// Where the walker stands.
    pub origin: String,
    /// POIs to point at, in the order headings must be submitted.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEndMsg {
    pub record: RunRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    UnexpectedMessage,
    UnknownRoute,
    BadLog,
    RouteIncomplete,
    PointingLength,
    Internal,
}

impl ErrorCode {
    /// Web-socket close code sent after the error frame.
    pub fn close_code(self) -> u16 {
        match self {
            ErrorCode::Internal => 1011,
            _ => 1008,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: ErrorCode,
    pub message: String,
}

/// Parses a client frame, rejecting other protocol versions.
pub fn parse_client(text: &str) -> Result<ClientBody, ErrorMsg> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ErrorMsg { code: ErrorCode::Malformed, message: e.to_string() })?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(ErrorMsg {
                code: ErrorCode::UnsupportedVersion,
                message: format!("protocol version {v} is not supported (expected {PROTOCOL_VERSION})"),
            })
        }
        None => return Err(ErrorMsg { code: ErrorCode::Malformed, message: "missing numeric \"v\"".into() }),
    }
    serde_json::from_value::<ClientMessage>(value)
        .map(|m| m.body)
        .map_err(|e| ErrorMsg { code: ErrorCode::Malformed, message: e.to_string() })
}
