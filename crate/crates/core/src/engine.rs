//! The guidance pipeline shared by the simulator and the session server: tracker,
//! beacon, prompting and instruction delivery for one walker on one route.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beacon::{silence, step_beacon};
use crate::instructor::{
    baseline_instruction, query_remote, synthesize_mock, validate_side, InstructionResult, Landmark, ModelClient,
    SideCheck, SystemInstruction,
};
use crate::metrics::{BeaconPayload, LogEvent, LogRecord, UtterancePayload, UtteranceSource};
use crate::prompting::{build_packet, step_trigger, PromptState, PromptTriggerConfig, TriggerFired};
use crate::route::Route;
use crate::simkit::LatencyModel;
use crate::tracking::{
    distance_to_turn, facing_delta, PoseSample, TrackerConfig, TrackerEvent, TrackerState, TrackingError,
};
use crate::{BeaconConfig, BeaconState};

/// Study condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Map-app turn-by-turn phrasing only.
    #[serde(rename = "gmaps")]
    GMaps,
    /// Landmark instructions from the model.
    #[serde(rename = "ai-only")]
    AiOnly,
    /// Landmark instructions plus the spatial-audio beacon.
    #[serde(rename = "ai-sa")]
    AiSa,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::GMaps, Condition::AiOnly, Condition::AiSa];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::GMaps => "gmaps",
            Condition::AiOnly => "ai-only",
            Condition::AiSa => "ai-sa",
        }
    }

    pub fn beacon_enabled(self) -> bool {
        self == Condition::AiSa
    }

    pub fn uses_model(self) -> bool {
        self != Condition::GMaps
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?} (expected gmaps, ai-only or ai-sa)"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub tracker: TrackerConfig,
    pub beacon: BeaconConfig,
    pub prompt: PromptTriggerConfig,
    pub instruction: SystemInstruction,
    pub latency: LatencyModel,
}

#[derive(Clone, Default)]
pub enum InstructionBackend {
    #[default]
    Mock,
    /// Blocking model calls; the measured latency has already elapsed when the
    /// reply arrives, so it is delivered on the same tick.
    Remote(Arc<dyn ModelClient + Send + Sync>),
}

impl fmt::Debug for InstructionBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstructionBackend::Mock => f.write_str("Mock"),
            InstructionBackend::Remote(_) => f.write_str("Remote"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivered {
    pub waypoint_index: usize,
    pub source: UtteranceSource,
    pub result: InstructionResult,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuidanceEvent {
    Tracker(TrackerEvent),
    BeaconOn(BeaconState),
    BeaconOff,
    PromptFired(TriggerFired),
    Utterance(Delivered),
}

impl GuidanceEvent {
    /// Log form; `RouteCompleted` has no line of its own.
    pub fn to_log(&self, t: f64) -> Option<LogRecord> {
        let event = match self {
            GuidanceEvent::Tracker(TrackerEvent::TurnReached { index, .. }) => {
                LogEvent::TurnReached { waypoint_index: *index }
            }
            GuidanceEvent::Tracker(TrackerEvent::RouteCompleted { .. }) => return None,
            GuidanceEvent::Tracker(TrackerEvent::DeviationStarted { off_m, waypoint_index, .. }) => {
                LogEvent::DeviationStart { waypoint_index: *waypoint_index, off_m: *off_m }
            }
            GuidanceEvent::Tracker(TrackerEvent::DeviationEnded { max_off_m, .. }) => {
                LogEvent::DeviationEnd { max_off_m: *max_off_m }
            }
            GuidanceEvent::BeaconOn(b) => LogEvent::BeaconOn(beacon_payload(b)),
            GuidanceEvent::BeaconOff => LogEvent::BeaconOff {},
            GuidanceEvent::PromptFired(f) => {
                LogEvent::PromptFired { scenario: f.scenario.number(), waypoint_index: f.waypoint_index }
            }
            GuidanceEvent::Utterance(d) => LogEvent::Utterance(UtterancePayload {
                text: d.result.utterance.clone(),
                latency_s: d.result.latency_s,
                waypoint_index: d.waypoint_index,
                source: d.source,
                landmark: d.result.landmark.as_ref().map(|l| l.name.clone()),
                side: d.result.landmark_side,
                bbox: d.result.bbox,
            }),
        };
        Some(LogRecord { t, event })
    }
}

pub fn beacon_payload(b: &BeaconState) -> BeaconPayload {
    BeaconPayload {
        azimuth_deg: b.azimuth_deg.value(),
        gain_l: b.render.gain_left,
        gain_r: b.render.gain_right,
        itd_s: b.render.itd_s,
        behind: b.render.behind,
        pulse_period_ms: b.render.pulse.map(|p| p.period_ms),
        pulse_side: b.render.pulse.map(|p| p.pattern),
    }
}

#[derive(Debug, Clone)]
struct Pending {
    deliver_at: f64,
    delivered: Delivered,
}

/// One walker's guidance state. Feed it pose samples in time order.
#[derive(Debug, Clone)]
pub struct Engine {
    route: Arc<Route>,
    landmarks: Arc<Vec<Landmark>>,
    condition: Condition,
    cfg: EngineConfig,
    backend: InstructionBackend,
    pub tracker: TrackerState,
    pub beacon: BeaconState,
    pub prompt: PromptState,
    history: VecDeque<PoseSample>,
    pending: Vec<Pending>,
    announced: BTreeSet<(usize, bool)>,
    rng: ChaCha8Rng,
    latencies: Vec<f64>,
    last_sample: Option<PoseSample>,
}

impl Engine {
    pub fn new(
        route: Arc<Route>,
        landmarks: Arc<Vec<Landmark>>,
        condition: Condition,
        cfg: EngineConfig,
        backend: InstructionBackend,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            route,
            landmarks,
            condition,
            cfg,
            backend,
            tracker: TrackerState::new(),
            beacon: BeaconState::default(),
            prompt: PromptState::default(),
            history: VecDeque::new(),
            pending: Vec::new(),
            announced: BTreeSet::new(),
            rng,
            latencies: Vec::new(),
            last_sample: None,
        }
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn latency_samples(&self) -> &[f64] {
        &self.latencies
    }

    pub fn last_sample(&self) -> Option<&PoseSample> {
        self.last_sample.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.tracker.is_complete(&self.route)
    }

    /// Advances every stage by one sample and returns what happened, in a fixed order:
    /// tracker transitions, due utterances, beacon changes, then prompt and
    /// instruction activity.
    pub fn step(&mut self, sample: &PoseSample) -> Result<Vec<GuidanceEvent>, TrackingError> {
        let tracker_events = self.tracker.ingest(sample, &self.route, &self.cfg.tracker)?;
        let mut out: Vec<GuidanceEvent> = tracker_events.into_iter().map(GuidanceEvent::Tracker).collect();
        self.last_sample = Some(*sample);
        self.history.push_back(*sample);
        let keep_from = sample.t - self.cfg.prompt.stationary_window_s - 1.0;
        while self.history.len() > 2 && self.history[1].t <= keep_from {
            self.history.pop_front();
        }

        self.deliver_due(sample.t, &mut out);

        if self.is_complete() {
            if self.beacon.active {
                self.beacon = silence(&self.beacon, &self.cfg.beacon);
                out.push(GuidanceEvent::BeaconOff);
            }
            return Ok(out);
        }

        if self.condition.beacon_enabled() {
            let delta = facing_delta(sample, &self.route, &self.tracker)?;
            let next = step_beacon(&self.beacon, delta, &self.cfg.beacon);
            match (self.beacon.active, next.active) {
                (false, true) => out.push(GuidanceEvent::BeaconOn(next)),
                (true, false) => out.push(GuidanceEvent::BeaconOff),
                _ => {}
            }
            self.beacon = next;
        }

        let index = self.tracker.current_waypoint_index;
        if self.condition.uses_model() {
            let history = self.history.make_contiguous();
            if let Some(fired) = step_trigger(&mut self.prompt, history, &self.tracker, &self.route, &self.cfg.prompt) {
                out.push(GuidanceEvent::PromptFired(fired));
                self.instruct(sample, index, sample.t, &mut out)?;
            }
        } else {
            let dist = distance_to_turn(sample, &self.route, &self.tracker)?;
            // once when the waypoint becomes current, once more on approach
            let activation = self.announced.insert((index, false));
            let approach = dist < self.cfg.prompt.proximity_m && self.announced.insert((index, true));
            if activation || approach {
                let packet = build_packet(sample, &self.tracker, &self.route, "")?;
                out.push(GuidanceEvent::Utterance(Delivered {
                    waypoint_index: index,
                    source: UtteranceSource::Baseline,
                    result: baseline_instruction(&packet),
                }));
            }
        }
        Ok(out)
    }

    fn instruct(
        &mut self,
        sample: &PoseSample,
        index: usize,
        now: f64,
        out: &mut Vec<GuidanceEvent>,
    ) -> Result<(), TrackingError> {
        let packet = build_packet(sample, &self.tracker, &self.route, "")?;
        let (mut result, source, deliver_at) = match &self.backend {
            InstructionBackend::Remote(client) => match query_remote(&packet, &self.cfg.instruction, client.as_ref()) {
                Ok(r) => (r, UtteranceSource::Remote, now),
                Err(e) => {
                    tracing::warn!(error = %e, "model call failed; using the landmark database");
                    self.mock(&packet, now)
                }
            },
            InstructionBackend::Mock => self.mock(&packet, now),
        };
        if let SideCheck::Corrected(fixed) = validate_side(&result) {
            result = fixed;
        }
        self.latencies.push(result.latency_s);
        let delivered = Delivered { waypoint_index: index, source, result };
        if deliver_at <= now {
            out.push(GuidanceEvent::Utterance(delivered));
        } else {
            self.pending.push(Pending { deliver_at, delivered });
        }
        Ok(())
    }

    fn mock(
        &mut self,
        packet: &crate::prompting::ContextPacket,
        now: f64,
    ) -> (InstructionResult, UtteranceSource, f64) {
        let mut r = synthesize_mock(packet, &self.landmarks, &self.cfg.instruction);
        r.latency_s = self.cfg.latency.sample(&mut self.rng);
        let due = now + r.latency_s;
        (r, UtteranceSource::Mock, due)
    }

    fn deliver_due(&mut self, now: f64, out: &mut Vec<GuidanceEvent>) {
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].deliver_at <= now {
                out.push(GuidanceEvent::Utterance(self.pending.remove(i).delivered));
            } else {
                i += 1;
            }
        }
    }

    /// Closes any open excursion; call once when the walk stops.
    pub fn finish(&mut self) {
        self.tracker.finish();
    }
}

/// Re-runs the tracker over the pose lines of a log. If the log records a run end,
/// the final excursion is closed the same way the run closed it.
pub fn replay_tracker(log: &[LogRecord], route: &Route, cfg: &TrackerConfig) -> Result<TrackerState, TrackingError> {
    let mut st = TrackerState::new();
    let mut ended = false;
    for r in log {
        match &r.event {
            LogEvent::Pose(s) => {
                st.ingest(s, route, cfg)?;
            }
            LogEvent::RunEnd(_) => ended = true,
            _ => {}
        }
    }
    if ended {
        st.finish();
    }
    Ok(st)
}
