//! Instruction synthesis.
//!
//! * [`synthesize_mock`]: deterministic, landmark-database surrogate for the
//!   vision-language model.
//! * [`query_remote`]: sends the system instruction and packet to an HTTP model
//!   endpoint and parses its delimited reply.
//! * [`validate_side`]: catches left/right reversals using the bounding box.
//! * [`baseline_instruction`]: provider-style turn-by-turn phrasing with cardinal
//!   directions, used for the map-app condition.
//!
//! Reply wire format (one field per line, any order, unknown lines ignored):
//!
//! ```text
//! UTTERANCE: Turn left at the fountain on your left.
//! LANDMARK: fountain
//! SIDE: left
//! BBOX: 0.120,0.350,0.280,0.650
//! ```
//!
//! `LANDMARK`, `SIDE` and `BBOX` may be `none` or missing.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{bearing_deg, distance_m, signed_delta};
use crate::prompting::ContextPacket;
use crate::route::Maneuver;
use crate::{GeoPoint, HeadingDeg};

pub const VLM_URL_ENV: &str = "NAV_VLM_URL";
pub const VLM_KEY_ENV: &str = "NAV_VLM_KEY";

/// Words the egocentric rules forbid.
pub const CARDINAL_WORDS: [&str; 4] = ["north", "south", "east", "west"];

/// The six rules every system instruction must carry.
pub const RULES: [&str; 6] = [
    "Give egocentric instructions instead of cardinal directions: say left, right, ahead or behind, never north, south, east or west.",
    "Before naming a landmark's side, check where its bounding box lies in the image to avoid left/right reversals.",
    "If the user is not facing the turn, tell them which way to turn and position the landmark relative to them.",
    "If the turn is more than {far} meters away, tell the user to continue forward.",
    "Present the turn guidance first, then the landmark.",
    "Only mention landmarks that are visible in the image; do not hallucinate.",
];

#[derive(Debug, Error)]
pub enum InstructorError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("reply does not follow the structured format: {0}")]
    Parse(String),
    #[error("model call timed out after {0:?}")]
    Timeout(Duration),
    #[error("landmark file: {0}")]
    LandmarkFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemInstruction {
    /// Preamble; the rule list is appended by [`SystemInstruction::render`].
    pub template_text: String,
    pub far_threshold_m: f64,
    /// Beyond this facing error the mock phrases a reorientation.
    pub align_deg: f64,
    /// Simulated camera half field of view.
    pub fov_half_deg: f64,
    pub view_range_m: f64,
}

impl Default for SystemInstruction {
    fn default() -> Self {
        Self {
            template_text: "You guide a blind or low-vision pedestrian. You receive a photo taken in their \
                            facing direction plus their position, heading, and the direction and distance \
                            to the next turn. Reply with one short spoken instruction."
                .to_string(),
            far_threshold_m: 60.0,
            align_deg: 25.0,
            fov_half_deg: 30.0,
            view_range_m: 40.0,
        }
    }
}

impl SystemInstruction {
    pub fn render(&self) -> String {
        let mut out = self.template_text.clone();
        out.push_str("\n\nRules:\n");
        for (i, rule) in RULES.iter().enumerate() {
            let rule = rule.replace("{far}", &format!("{}", self.far_threshold_m));
            out.push_str(&format!("{}. {rule}\n", i + 1));
        }
        out.push_str(
            "\nAnswer exactly in this format:\nUTTERANCE: <instruction>\nLANDMARK: <name or none>\n\
             SIDE: <left|right|ahead|behind|none>\nBBOX: <x0,y0,x1,y1 normalized, or none>\n",
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    #[serde(flatten)]
    pub pos: GeoPoint,
    /// 1 for a one-of-a-kind feature, low for generic ones such as trees.
    pub uniqueness: f64,
    #[serde(default)]
    pub tags: Vec<String>,
}

pub fn load_landmarks(data: &[u8]) -> Result<Vec<Landmark>, InstructorError> {
    let db: Vec<Landmark> = serde_json::from_slice(data).map_err(|e| InstructorError::LandmarkFile(e.to_string()))?;
    if let Some(bad) = db.iter().find(|l| !(0.0..=1.0).contains(&l.uniqueness) || !l.pos.is_valid()) {
        return Err(InstructorError::LandmarkFile(format!("invalid landmark {:?}", bad.name)));
    }
    Ok(db)
}

pub fn load_landmarks_file(path: impl AsRef<Path>) -> Result<Vec<Landmark>, InstructorError> {
    load_landmarks(&std::fs::read(path)?)
}

pub fn landmarks_to_json(db: &[Landmark]) -> String {
    serde_json::to_string_pretty(db).expect("landmarks serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkSide {
    Left,
    Right,
    Ahead,
    Behind,
}

impl LandmarkSide {
    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkSide::Left => "left",
            LandmarkSide::Right => "right",
            LandmarkSide::Ahead => "ahead",
            LandmarkSide::Behind => "behind",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "left" => LandmarkSide::Left,
            "right" => LandmarkSide::Right,
            "ahead" => LandmarkSide::Ahead,
            "behind" => LandmarkSide::Behind,
            _ => return None,
        })
    }
}

/// Normalized image rectangle, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn center_x(&self) -> f64 {
        0.5 * (self.x0 + self.x1)
    }

    fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| (0.0..=1.0).contains(v))
            && self.x0 <= self.x1
            && self.y0 <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionResult {
    pub utterance: String,
    pub landmark: Option<Landmark>,
    pub landmark_side: Option<LandmarkSide>,
    pub bbox: Option<BBox>,
    pub latency_s: f64,
}

impl InstructionResult {
    fn plain(utterance: String) -> Self {
        Self { utterance, landmark: None, landmark_side: None, bbox: None, latency_s: 0.0 }
    }
}

pub fn contains_cardinal(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    CARDINAL_WORDS.iter().any(|w| lower.contains(w))
}

fn round_to_10(m: f64) -> u32 {
    ((m / 10.0).round() * 10.0).max(10.0) as u32
}

/// Landmark the simulated camera would pick: inside the field of view, highest
/// uniqueness first, nearer first on ties.
pub fn select_landmark<'a>(
    pos: GeoPoint,
    heading: HeadingDeg,
    db: &'a [Landmark],
    cfg: &SystemInstruction,
) -> Option<(&'a Landmark, f64, f64)> {
    let mut best: Option<(&Landmark, f64, f64)> = None;
    for lm in db {
        if contains_cardinal(&lm.name) {
            continue;
        }
        let dist = distance_m(pos, lm.pos);
        let Ok(b) = bearing_deg(pos, lm.pos) else { continue };
        let d = signed_delta(heading, b).value();
        if dist > cfg.view_range_m || d.abs() > cfg.fov_half_deg {
            continue;
        }
        let better = match best {
            None => true,
            Some((cur, cur_dist, _)) => {
                lm.uniqueness > cur.uniqueness || (lm.uniqueness == cur.uniqueness && dist < cur_dist)
            }
        };
        if better {
            best = Some((lm, dist, d));
        }
    }
    best
}

/// Box the simulated detector reports for a landmark at signed delta `d` and
/// distance `dist`. Horizontal position is linear in `d` across the field of
/// view, so the center falls left of 0.5 exactly when the landmark is left.
fn synth_bbox(d: f64, dist: f64, cfg: &SystemInstruction) -> BBox {
    let cx = 0.5 + 0.5 * d / cfg.fov_half_deg;
    let w = (2.0 / dist.max(1.0)).clamp(0.04, 0.3);
    let h = (2.0 * w).min(0.6);
    BBox { x0: (cx - w / 2.0).max(0.0), y0: 0.5 - h / 2.0, x1: (cx + w / 2.0).min(1.0), y1: 0.5 + h / 2.0 }
}

fn turn_word(m: Maneuver) -> &'static str {
    match m {
        Maneuver::TurnLeft => "left",
        _ => "right",
    }
}

/// Deterministic landmark-database surrogate for the model. `latency_s` is 0;
/// callers attach a sampled latency.
pub fn synthesize_mock(packet: &ContextPacket, db: &[Landmark], cfg: &SystemInstruction) -> InstructionResult {
    let dist = packet.dist_to_turn_m;
    if dist > cfg.far_threshold_m {
        return InstructionResult::plain(format!("Continue forward for about {} meters.", round_to_10(dist)));
    }
    let delta = packet.delta_to_turn.value();
    if delta.abs() > cfg.align_deg {
        let text = if delta.abs() > 135.0 {
            "Turn around; the next turn point is behind you.".to_string()
        } else {
            let side = if delta < 0.0 { "left" } else { "right" };
            let amount = ((delta.abs() / 15.0).round() * 15.0) as u32;
            format!(
                "Turn {side} about {amount} degrees to face the next turn point, {} meters away.",
                round_to_10(dist)
            )
        };
        return InstructionResult::plain(text);
    }

    let seen = select_landmark(packet.pos, packet.heading, db, cfg);
    let (head, fallback) = match packet.step.maneuver {
        Maneuver::TurnLeft | Maneuver::TurnRight => {
            let w = turn_word(packet.step.maneuver);
            (format!("Turn {w} at the"), format!("Turn {w} in about {} meters.", round_to_10(dist)))
        }
        Maneuver::Straight => (
            "Continue straight past the".to_string(),
            format!("Continue straight through the crossing in about {} meters.", round_to_10(dist)),
        ),
        Maneuver::UTurn => (
            "Turn around at the".to_string(),
            format!("Turn around in about {} meters, where the path ends.", round_to_10(dist)),
        ),
        Maneuver::Arrive => (
            "Continue straight to your destination near the".to_string(),
            format!("Continue straight to your destination, about {} meters ahead.", round_to_10(dist)),
        ),
    };
    match seen {
        None => InstructionResult::plain(fallback),
        Some((lm, lm_dist, d)) => {
            // the box center decides, so a delta within rounding of zero cannot disagree
            let bbox = synth_bbox(d, lm_dist, cfg);
            let side = if bbox.center_x() < 0.5 { LandmarkSide::Left } else { LandmarkSide::Right };
            InstructionResult {
                utterance: format!("{head} {} on your {}.", lm.name, side.as_str()),
                landmark: Some(lm.clone()),
                landmark_side: Some(side),
                bbox: Some(bbox),
                latency_s: 0.0,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SideCheck {
    Consistent,
    Corrected(InstructionResult),
    Unverifiable,
}

fn swap_side_words(text: &str) -> String {
    const MARK: &str = "\u{0}";
    text.replace("your left", MARK).replace("your right", "your left").replace(MARK, "your right")
}

/// Checks the stated side against the bounding box and repairs reversals.
pub fn validate_side(result: &InstructionResult) -> SideCheck {
    let (Some(bbox), Some(side)) = (result.bbox, result.landmark_side) else {
        return SideCheck::Unverifiable;
    };
    let expected = if bbox.center_x() < 0.5 { LandmarkSide::Left } else { LandmarkSide::Right };
    match side {
        LandmarkSide::Ahead | LandmarkSide::Behind => SideCheck::Unverifiable,
        s if s == expected => SideCheck::Consistent,
        _ => SideCheck::Corrected(InstructionResult {
            utterance: swap_side_words(&result.utterance),
            landmark_side: Some(expected),
            ..result.clone()
        }),
    }
}

const CARDINALS: [&str; 8] = ["north", "northeast", "east", "southeast", "south", "southwest", "west", "northwest"];

/// 8-way compass word; each bucket spans 45° centered on its direction, lower
/// edge inclusive.
pub fn cardinal_8(bearing: HeadingDeg) -> &'static str {
    let i = ((bearing.value() + 22.5) / 45.0).floor() as usize % 8;
    CARDINALS[i]
}

/// Map-app phrasing: cardinal heading for the first step, then distance-to-turn.
pub fn baseline_instruction(packet: &ContextPacket) -> InstructionResult {
    let dist = round_to_10(packet.dist_to_turn_m);
    let text = if packet.waypoint_index == 0 {
        let b = bearing_deg(packet.step.start, packet.step.end).unwrap_or_default();
        format!("Head {} on the walkway for {dist} meters.", cardinal_8(b))
    } else {
        let action = match packet.step.maneuver {
            Maneuver::TurnLeft => "turn left",
            Maneuver::TurnRight => "turn right",
            Maneuver::Straight => "continue straight",
            Maneuver::UTurn => "make a U-turn",
            Maneuver::Arrive => "arrive at your destination",
        };
        format!("In {dist} meters, {action}.")
    };
    InstructionResult::plain(text)
}

/// What goes over the wire to a model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system: String,
    pub image_ref: String,
    pub metadata: serde_json::Value,
}

pub trait ModelClient {
    /// Returns the raw reply text.
    fn complete(&self, request: &ModelRequest) -> Result<String, InstructorError>;
}

fn request_for(packet: &ContextPacket, cfg: &SystemInstruction) -> ModelRequest {
    ModelRequest {
        system: cfg.render(),
        image_ref: packet.image_ref.clone(),
        metadata: serde_json::json!({
            "lat": packet.pos.lat_deg,
            "lon": packet.pos.lon_deg,
            "heading_deg": packet.heading.value(),
            "delta_to_turn_deg": packet.delta_to_turn.value(),
            "dist_to_turn_m": packet.dist_to_turn_m,
            "maneuver": packet.step.maneuver.as_str(),
            "waypoint_index": packet.waypoint_index,
        }),
    }
}

/// Parsed reply fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub utterance: String,
    pub landmark: Option<String>,
    pub side: Option<LandmarkSide>,
    pub bbox: Option<BBox>,
}

pub fn parse_reply(text: &str) -> Result<Reply, InstructorError> {
    let bad = |m: String| InstructorError::Parse(m);
    let mut utterance = None;
    let mut landmark = None;
    let mut side = None;
    let mut bbox = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once(':') else { continue };
        let value = value.trim();
        let none = value.is_empty() || value.eq_ignore_ascii_case("none");
        match key.trim() {
            "UTTERANCE" if !none => utterance = Some(value.to_string()),
            "LANDMARK" if !none => landmark = Some(value.to_string()),
            "SIDE" if !none => {
                side = Some(
                    LandmarkSide::parse(&value.to_ascii_lowercase()).ok_or_else(|| bad(format!("side {value:?}")))?,
                )
            }
            "BBOX" if !none => {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("bbox {value:?}: {e}")))?;
                let [x0, y0, x1, y1] = v[..] else { return Err(bad(format!("bbox needs 4 numbers: {value:?}"))) };
                let b = BBox { x0, y0, x1, y1 };
                if !b.is_valid() {
                    return Err(bad(format!("bbox out of range: {value:?}")));
                }
                bbox = Some(b);
            }
            _ => {}
        }
    }
    let utterance = utterance.ok_or_else(|| bad("missing UTTERANCE".into()))?;
    if bbox.is_some() && landmark.is_none() {
        return Err(bad("BBOX without LANDMARK".into()));
    }
    Ok(Reply { utterance, landmark, side, bbox })
}

/// Inverse of [`parse_reply`].
pub fn format_reply(result: &InstructionResult) -> String {
    let landmark = result.landmark.as_ref().map_or("none", |l| l.name.as_str());
    let side = result.landmark_side.map_or("none", LandmarkSide::as_str);
    let bbox = result.bbox.map_or("none".to_string(), |b| format!("{:.3},{:.3},{:.3},{:.3}", b.x0, b.y0, b.x1, b.y1));
    format!("UTTERANCE: {}\nLANDMARK: {landmark}\nSIDE: {side}\nBBOX: {bbox}\n", result.utterance)
}

/// Queries a model and records the wall-clock latency. Landmarks named in the
/// reply carry the walker's position and uniqueness 0 because the reply only
/// names them.
pub fn query_remote(
    packet: &ContextPacket,
    cfg: &SystemInstruction,
    client: &dyn ModelClient,
) -> Result<InstructionResult, InstructorError> {
    let started = Instant::now();
    let text = client.complete(&request_for(packet, cfg))?;
    let latency_s = started.elapsed().as_secs_f64();
    let reply = parse_reply(&text)?;
    Ok(InstructionResult {
        utterance: reply.utterance,
        landmark: reply.landmark.map(|name| Landmark {
            name,
            pos: packet.pos,
            uniqueness: 0.0,
            tags: vec!["reported".to_string()],
        }),
        landmark_side: reply.side,
        bbox: reply.bbox,
        latency_s,
    })
}

/// POSTs the request as JSON and reads the reply text.
#[derive(Debug, Clone)]
pub struct HttpModelClient {
    pub url: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl HttpModelClient {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        Self { url: url.into(), key, timeout: Duration::from_secs(15) }
    }

    /// Configured from `NAV_VLM_URL` / `NAV_VLM_KEY`, if the URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(VLM_URL_ENV).ok().filter(|u| !u.is_empty())?;
        Some(Self::new(url, std::env::var(VLM_KEY_ENV).ok()))
    }
}

impl ModelClient for HttpModelClient {
    fn complete(&self, request: &ModelRequest) -> Result<String, InstructorError> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        let mut req = agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).map_err(|e| InstructorError::Transport(e.to_string()))?;
        let mut resp = req.content_type("application/json").send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => InstructorError::Timeout(self.timeout),
            other => InstructorError::Transport(other.to_string()),
        })?;
        resp.body_mut().read_to_string().map_err(|e| InstructorError::Transport(e.to_string()))
    }
}
