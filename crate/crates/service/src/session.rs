//! One walker's session, independent of the transport.

use std::collections::VecDeque;
use std::sync::Arc;

use nav_core::engine::{Condition, Engine, EngineConfig, GuidanceEvent, InstructionBackend};
use nav_core::geo::project_unchecked;
use nav_core::instructor::Landmark;
use nav_core::metrics::{
    dead_end_deviations, pointing_error, pointing_truth, run_end, LogEvent, LogRecord, PointingTask, RunEndPayload,
    RunRecord,
};
use nav_core::route::Route;
use nav_core::tracking::PoseSample;
use nav_core::{HeadingDeg, LocalXY};
use thiserror::Error;

pub use crate::protocol::SessionMode;
use crate::protocol::{
    ClientBody, ClientInput, ErrorCode, ErrorMsg, PointingPrompt, RunEndMsg, ServerBody, ServerMessage, StateUpdate,
    TrackerView, UtteranceMsg,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{0}")]
    Protocol(String),
    #[error("unknown route {0:?}")]
    UnknownRoute(String),
    #[error("replay log: {0}")]
    BadLog(String),
    #[error("the route is not complete yet")]
    RouteIncomplete,
    #[error("expected {expected} headings, got {got}")]
    PointingLength { expected: usize, got: usize },
    #[error("engine: {0}")]
    Engine(String),
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::Protocol(_) => ErrorCode::UnexpectedMessage,
            SessionError::UnknownRoute(_) => ErrorCode::UnknownRoute,
            SessionError::BadLog(_) => ErrorCode::BadLog,
            SessionError::RouteIncomplete => ErrorCode::RouteIncomplete,
            SessionError::PointingLength { .. } => ErrorCode::PointingLength,
            SessionError::Engine(_) => ErrorCode::Internal,
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::new(ServerBody::Error(ErrorMsg { code: self.code(), message: self.to_string() }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Running,
    /// Route complete; waiting for the pointing answers.
    Pointing,
    Ended,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub tick_hz: f64,
    pub engine: EngineConfig,
    pub backend: InstructionBackend,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { tick_hz: 10.0, engine: EngineConfig::default(), backend: InstructionBackend::Mock }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    mode: SessionMode,
    engine: Engine,
    seed: u64,
    tick_hz: f64,
    tick: u64,
    pos: LocalXY,
    heading: HeadingDeg,
    control: ClientInput,
    replay: VecDeque<PoseSample>,
    replay_pointing: Vec<f64>,
    walked_m: f64,
    last_pos: Option<LocalXY>,
    t: f64,
    log: Vec<LogRecord>,
    phase: Phase,
    pointing: Option<PointingTask>,
    pointing_errors: Vec<f64>,
    record: Option<RunRecord>,
}

impl Session {
    pub fn interactive(
        id: impl Into<String>,
        route: Arc<Route>,
        landmarks: Arc<Vec<Landmark>>,
        condition: Condition,
        seed: u64,
        cfg: &SessionConfig,
    ) -> Self {
        let heading = route.step_bearing(0).unwrap_or_default();
        let engine = Engine::new(route, landmarks, condition, cfg.engine.clone(), cfg.backend.clone(), seed);
        Self {
            id: id.into(),
            mode: SessionMode::Interactive,
            engine,
            seed,
            tick_hz: cfg.tick_hz,
            tick: 0,
            pos: LocalXY::new(0.0, 0.0),
            heading,
            control: ClientInput::default(),
            replay: VecDeque::new(),
            replay_pointing: Vec::new(),
            walked_m: 0.0,
            last_pos: None,
            t: 0.0,
            log: Vec::new(),
            phase: Phase::Running,
            pointing: None,
            pointing_errors: Vec::new(),
            record: None,
        }
    }

    /// Plays back the pose samples of a recorded log through a fresh engine.
    pub fn replay(
        id: impl Into<String>,
        route: Arc<Route>,
        landmarks: Arc<Vec<Landmark>>,
        condition: Condition,
        seed: u64,
        log: &[LogRecord],
        cfg: &SessionConfig,
    ) -> Result<Self, SessionError> {
        let samples: VecDeque<PoseSample> = log
            .iter()
            .filter_map(|r| match r.event {
                LogEvent::Pose(s) => Some(s),
                _ => None,
            })
            .collect();
        if samples.is_empty() {
            return Err(SessionError::BadLog("log holds no pose samples".into()));
        }
        let mut s = Self::interactive(id, route, landmarks, condition, seed, cfg);
        s.mode = SessionMode::Replay;
        s.replay = samples;
        s.replay_pointing = run_end(log).map(|p| p.record.pointing_errors_deg.clone()).unwrap_or_default();
        Ok(s)
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn tick_hz(&self) -> f64 {
        self.tick_hz
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn record(&self) -> Option<&RunRecord> {
        self.record.as_ref()
    }

    /// Applies one client message. Steering takes effect on the next tick.
    pub fn handle(&mut self, body: ClientBody) -> Result<Vec<ServerMessage>, SessionError> {
        match body {
            ClientBody::Hello(_) => Err(SessionError::Protocol("session already started".into())),
            ClientBody::Input(input) => {
                self.handle_input(input)?;
                Ok(Vec::new())
            }
            ClientBody::Pointing(p) => {
                self.submit_pointing(&p.headings_deg)?;
                Ok(self.end_messages())
            }
        }
    }

    pub fn handle_input(&mut self, input: ClientInput) -> Result<(), SessionError> {
        if self.mode == SessionMode::Replay {
            return Err(SessionError::Protocol("replay sessions are read-only".into()));
        }
        if !(input.turn_rate_dps.is_finite() && input.speed_mps.is_finite() && input.speed_mps >= 0.0) {
            return Err(SessionError::Protocol("input needs finite turn rate and speed ≥ 0".into()));
        }
        self.control = input;
        Ok(())
    }

    /// Advances one tick: integrates (or replays) the pose, runs the engine and
    /// returns the frames to send. Nothing happens once the route is done.
    pub fn tick(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        if self.phase != Phase::Running {
            return Ok(Vec::new());
        }
        let sample = match self.mode {
            SessionMode::Interactive => {
                let t = self.tick as f64 / self.tick_hz;
                if self.tick > 0 {
                    let dt = 1.0 / self.tick_hz;
                    self.heading = self.heading.offset(self.control.turn_rate_dps * dt);
                    self.pos = self.pos + LocalXY::along(self.heading, self.control.speed_mps * dt);
                }
                PoseSample {
                    t,
                    pos: self.engine.route().from_local(self.pos),
                    heading: self.heading,
                    speed_mps: self.control.speed_mps,
                }
            }
            SessionMode::Replay => match self.replay.pop_front() {
                Some(s) => s,
                None => {
                    self.pointing_errors = std::mem::take(&mut self.replay_pointing);
                    self.finish(true);
                    return Ok(self.end_messages());
                }
            },
        };
        self.tick += 1;
        self.t = sample.t;
        let here = project_unchecked(self.engine.route().origin(), sample.pos);
        if let Some(prev) = self.last_pos {
            self.walked_m += (here - prev).norm();
        }
        self.last_pos = Some(here);

        self.log.push(LogRecord { t: sample.t, event: LogEvent::Pose(sample) });
        let events = self.engine.step(&sample).map_err(|e| SessionError::Engine(e.to_string()))?;
        let mut out = Vec::new();
        for ev in &events {
            if let Some(rec) = ev.to_log(sample.t) {
                self.log.push(rec);
            }
            if let GuidanceEvent::Utterance(d) = ev {
                out.push(ServerMessage::new(ServerBody::Utterance(UtteranceMsg {
                    t: sample.t,
                    text: d.result.utterance.clone(),
                    latency_s: d.result.latency_s,
                    waypoint_index: d.waypoint_index,
                    source: d.source,
                })));
            }
        }
        let complete = self.engine.is_complete();
        let view = TrackerView::new(&self.engine.tracker, complete);
        out.push(ServerMessage::new(ServerBody::State(StateUpdate::new(&sample, &self.engine.beacon, view))));
        if complete && self.mode == SessionMode::Interactive {
            let prompt = self.start_pointing()?;
            out.push(ServerMessage::new(ServerBody::PointingPrompt(prompt)));
        }
        Ok(out)
    }

    pub fn start_pointing(&mut self) -> Result<PointingPrompt, SessionError> {
        if !self.engine.is_complete() {
            return Err(SessionError::RouteIncomplete);
        }
        let task = pointing_truth(self.engine.route()).map_err(|e| SessionError::Engine(e.to_string()))?;
        let prompt = PointingPrompt { origin: task.origin.clone(), targets: task.targets.clone() };
        self.pointing = Some(task);
        self.phase = Phase::Pointing;
        Ok(prompt)
    }

    /// Scores the walker's pointing headings and closes the run.
    pub fn submit_pointing(&mut self, headings_deg: &[f64]) -> Result<Vec<f64>, SessionError> {
        if self.mode == SessionMode::Replay {
            return Err(SessionError::Protocol("replay sessions are read-only".into()));
        }
        let task = match (&self.pointing, self.phase) {
            (Some(task), Phase::Pointing) => task,
            _ => return Err(SessionError::RouteIncomplete),
        };
        if headings_deg.len() != task.true_bearings.len() {
            return Err(SessionError::PointingLength { expected: task.true_bearings.len(), got: headings_deg.len() });
        }
        let pointed: Vec<HeadingDeg> = headings_deg.iter().map(|&h| HeadingDeg::new(h)).collect();
        let errors = pointing_error(task, &pointed).map_err(|e| SessionError::Engine(e.to_string()))?;
        self.pointing_errors = errors.clone();
        self.finish(true);
        Ok(errors)
    }

    /// Closes the run early, e.g. when the client disconnects.
    pub fn abandon(&mut self) {
        if self.phase != Phase::Ended {
            self.finish(false);
        }
    }

    fn finish(&mut self, by_protocol: bool) {
        self.engine.finish();
        let tracker = self.engine.tracker.clone();
        let route = self.engine.route();
        let completed = self.engine.is_complete();
        let note = match (completed, by_protocol) {
            (true, _) => None,
            (false, true) => Some("log ended before the last waypoint".to_string()),
            (false, false) => Some("client left before the last waypoint".to_string()),
        };
        let record = RunRecord {
            route_id: route.id.clone(),
            condition: self.engine.condition(),
            seed: self.seed,
            distance_walked_m: self.walked_m,
            deviation_count: tracker.deviation_count,
            deviation_intervals: tracker.deviation_intervals.clone(),
            dead_end_deviations: dead_end_deviations(route, &tracker.deviation_intervals),
            pointing_errors_deg: self.pointing_errors.clone(),
            latency_samples_s: self.engine.latency_samples().to_vec(),
            completed,
            duration_s: self.t,
            note,
        };
        self.log.push(LogRecord {
            t: self.t,
            event: LogEvent::RunEnd(Box::new(RunEndPayload { record: record.clone(), tracker })),
        });
        self.record = Some(record);
        self.phase = Phase::Ended;
    }

    fn end_messages(&self) -> Vec<ServerMessage> {
        self.record.iter().map(|r| ServerMessage::new(ServerBody::RunEnd(RunEndMsg { record: r.clone() }))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::PointingSubmission;
    use nav_core::fixtures::{gen_landmark_db, replica_route};
    use nav_core::geo::signed_delta;
    use nav_core::metrics::{log_to_string, read_log};

    fn session(condition: Condition) -> Session {
        Session::interactive(
            "t",
            Arc::new(replica_route("r1").unwrap()),
            Arc::new(gen_landmark_db()),
            condition,
            3,
            &SessionConfig::default(),
        )
    }

    fn states(msgs: &[ServerMessage]) -> Vec<StateUpdate> {
        msgs.iter()
            .filter_map(|m| match &m.body {
                ServerBody::State(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn standing_still_keeps_pose() {
        let mut s = session(Condition::AiSa);
        let first = states(&s.tick().unwrap())[0];
        for _ in 0..20 {
            let st = states(&s.tick().unwrap())[0];
            assert_eq!(st.pose.lat, first.pose.lat);
            assert_eq!(st.pose.lon, first.pose.lon);
            assert_eq!(st.pose.heading_deg, first.pose.heading_deg);
        }
    }

    #[test]
    fn turning_away_activates_beacon() {
        let mut s = session(Condition::AiSa);
        s.tick().unwrap();
        s.handle_input(ClientInput { turn_rate_dps: 10.0, speed_mps: 0.0 }).unwrap();
        let mut seen = None;
        for _ in 0..100 {
            let st = states(&s.tick().unwrap())[0];
            let route = s.engine().route();
            let wp = route.turn_waypoint(0).unwrap();
            let here = nav_core::GeoPoint { lat_deg: st.pose.lat, lon_deg: st.pose.lon };
            let bearing = nav_core::geo::bearing_deg(here, wp).unwrap();
            let delta = signed_delta(HeadingDeg::new(st.pose.heading_deg), bearing).abs();
            if delta >= 30.0 {
                seen = Some(st);
                break;
            }
        }
        let st = seen.expect("heading passed 30° off the waypoint");
        assert!(st.beacon.active);
        assert!((st.beacon.gain_l.powi(2) + st.beacon.gain_r.powi(2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn replay_rejects_input_and_reproduces_states() {
        let mut live = session(Condition::AiOnly);
        let mut live_states = states(&live.tick().unwrap());
        live.handle_input(ClientInput { turn_rate_dps: 0.0, speed_mps: 1.4 }).unwrap();
        for i in 0..400 {
            if i == 150 {
                live.handle_input(ClientInput { turn_rate_dps: -8.0, speed_mps: 1.2 }).unwrap();
            }
            live_states.extend(states(&live.tick().unwrap()));
        }
        live.abandon();
        let text = log_to_string(live.log());
        let log = read_log(text.as_bytes()).unwrap();

        let mut rp = Session::replay(
            "r",
            Arc::new(replica_route("r1").unwrap()),
            Arc::new(gen_landmark_db()),
            Condition::AiOnly,
            3,
            &log,
            &SessionConfig::default(),
        )
        .unwrap();
        let err = rp.handle(ClientBody::Input(ClientInput::default())).unwrap_err();
        assert_eq!(err.code(), ErrorCode::UnexpectedMessage);
        let mut replayed = vec![states(&rp.tick().unwrap())[0]];
        while rp.phase() == Phase::Running {
            replayed.extend(states(&rp.tick().unwrap()));
        }
        assert_eq!(replayed, live_states[..]);
    }

    /// Drives the walker along the route polyline at 1.4 m/s.
    fn walk_to_end(s: &mut Session) -> Vec<ServerMessage> {
        let route = s.engine().route().clone();
        let verts = route.local_polyline();
        let mut out = s.tick().unwrap();
        let mut leg = 1;
        for _ in 0..20_000 {
            if s.phase() != Phase::Running {
                break;
            }
            let here = s.pos;
            while leg < verts.len() - 1 && (verts[leg] - here).norm() < 0.8 {
                leg += 1;
            }
            let want = (verts[leg] - here).heading();
            let turn = signed_delta(s.heading, want).value() * s.tick_hz;
            s.handle_input(ClientInput { turn_rate_dps: turn, speed_mps: 1.4 }).unwrap();
            out.extend(s.tick().unwrap());
        }
        out
    }

    #[test]
    fn pointing_flow_persists_errors() {
        let mut s = session(Condition::GMaps);
        assert_eq!(s.start_pointing().unwrap_err(), SessionError::RouteIncomplete);
        let msgs = walk_to_end(&mut s);
        let prompt = msgs
            .iter()
            .find_map(|m| match &m.body {
                ServerBody::PointingPrompt(p) => Some(p.clone()),
                _ => None,
            })
            .expect("pointing prompt after the last waypoint");
        assert_eq!(prompt.targets.len(), 4);
        let bad = s.handle(ClientBody::Pointing(PointingSubmission { headings_deg: vec![0.0] })).unwrap_err();
        assert_eq!(bad.code(), ErrorCode::PointingLength);

        let task = pointing_truth(s.engine().route()).unwrap();
        let truth: Vec<f64> = task.true_bearings.iter().map(|b| b.value()).collect();
        let end = s.handle(ClientBody::Pointing(PointingSubmission { headings_deg: truth })).unwrap();
        let ServerBody::RunEnd(RunEndMsg { record }) = &end[0].body else { panic!("expected run_end") };
        assert!(record.completed);
        assert_eq!(record.deviation_count, 0);
        assert!(record.pointing_errors_deg.iter().all(|e| e.abs() < 1e-9));
        assert_eq!(s.record().unwrap().pointing_errors_deg.len(), 4);
        assert!(matches!(s.log().last().unwrap().event, LogEvent::RunEnd(_)));
    }
}
