//! Simulated pedestrian, noise and latency models, and the closed-loop run.
//!
//! The walker follows the route vertex to vertex. At each intersection it picks a
//! branch: the correct one with probability `1 − err`, otherwise one of the
//! off-route spurs. Without a usable beacon cue
//! `err = comprehension_error_base · (alternatives − 1)`, doubled when the latest
//! instruction for that waypoint is missing or does not name the maneuver
//! (cardinal headings, "continue forward", "turn around", reorientation hints).
//! With the beacon on and within `beacon_capture_deg` of a branch, the walker
//! follows it and errs with `beacon_follow_err`. Once the tracker flags a
//! deviation on a wrong branch, the conductor steps in: the walker stops, looks
//! around, walks back to the intersection and continues correctly.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::engine::{Condition, Engine, EngineConfig, GuidanceEvent, InstructionBackend};
use crate::geo::signed_delta;
use crate::instructor::Landmark;
use crate::metrics::{
    dead_end_deviations, pointing_error, pointing_truth, LogEvent, LogRecord, RunEndPayload, RunRecord,
};
use crate::route::Route;
use crate::tracking::{PoseSample, TrackerEvent, TrackerState};
use crate::{HeadingDeg, LocalXY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("latency model: {0}")]
    Latency(String),
    #[error("agent config: {0}")]
    Agent(String),
    #[error("route has no steps")]
    EmptyRoute,
}

/// Distance covered while waiting for a reply.
pub fn reaction_distance(speed_mps: f64, latency_s: f64) -> f64 {
    speed_mps * latency_s
}

/// Log-normal response time truncated to `[min_s, max_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub mu: f64,
    pub sigma: f64,
    pub min_s: f64,
    pub max_s: f64,
}

pub const LATENCY_MEAN_S: f64 = 3.31;
pub const LATENCY_SD_S: f64 = 0.81;
pub const LATENCY_MIN_S: f64 = 1.48;
pub const LATENCY_MAX_S: f64 = 11.29;

impl Default for LatencyModel {
    fn default() -> Self {
        Self::fit(LATENCY_MEAN_S, LATENCY_SD_S, LATENCY_MIN_S, LATENCY_MAX_S)
            .expect("default latency figures are attainable")
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f increasing, root bracketed
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl LatencyModel {
    /// Mean and sd of the truncated distribution.
    pub fn truncated_moments(&self) -> (f64, f64) {
        if self.sigma == 0.0 {
            return (self.mu.exp().clamp(self.min_s, self.max_s), 0.0);
        }
        let (a, b) = ((self.min_s.ln() - self.mu) / self.sigma, (self.max_s.ln() - self.mu) / self.sigma);
        let z = std_normal_cdf(b) - std_normal_cdf(a);
        let raw = |k: f64| {
            (k * self.mu + 0.5 * k * k * self.sigma * self.sigma).exp()
                * (std_normal_cdf(b - k * self.sigma) - std_normal_cdf(a - k * self.sigma))
                / z
        };
        let m1 = raw(1.0);
        let m2 = raw(2.0);
        if !(z > 0.0 && m1.is_finite() && m2.is_finite()) {
            // no representable mass inside the window: all of it sits at a bound
            return (self.mu.exp().clamp(self.min_s, self.max_s), 0.0);
        }
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    /// Finds `μ, σ` whose truncated mean and sd match the targets: for each σ the
    /// mean is matched by bisection on μ, and σ itself by bisection on the sd.
    pub fn fit(mean: f64, sd: f64, min_s: f64, max_s: f64) -> Result<Self, SimError> {
        if !(0.0 < min_s && min_s < mean && mean < max_s && sd > 0.0) {
            return Err(SimError::Latency(format!(
                "need 0 < min < mean < max and sd > 0, got {min_s} {mean} {max_s} {sd}"
            )));
        }
        let with_sigma = |sigma: f64| {
            let mu = bisect(min_s.ln() - 5.0, max_s.ln() + 5.0, |mu| {
                LatencyModel { mu, sigma, min_s, max_s }.truncated_moments().0 - mean
            });
            LatencyModel { mu, sigma, min_s, max_s }
        };
        let (lo, hi) = (1e-4, 3.0);
        if with_sigma(hi).truncated_moments().1 < sd {
            return Err(SimError::Latency(format!("sd {sd} not reachable inside [{min_s}, {max_s}]")));
        }
        let sigma = bisect(lo, hi, |s| with_sigma(s).truncated_moments().1 - sd);
        Ok(with_sigma(sigma))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma <= 0.0 {
            return self.mu.exp().clamp(self.min_s, self.max_s);
        }
        let dist = LogNormal::new(self.mu, self.sigma).expect("finite parameters");
        for _ in 0..10_000 {
            let x = dist.sample(rng);
            if (self.min_s..=self.max_s).contains(&x) {
                return x;
            }
        }
        // the window holds almost no mass; fall back to the nearest bound
        self.mu.exp().clamp(self.min_s, self.max_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub speed_mps: f64,
    pub heading_noise_deg_sd: f64,
    pub gps_noise_m_sd: f64,
    /// Wrong-branch probability per extra alternative under clear instructions.
    pub comprehension_error_base: f64,
    /// Multiplier on the error when the instruction is missing or unclear.
    pub ambiguity_factor: f64,
    pub beacon_follow_err: f64,
    pub beacon_capture_deg: f64,
    pub pointing_noise_deg_sd: f64,
    pub look_around_s: f64,
    /// Runs stop at this multiple of the route's walking time.
    pub time_cap_factor: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            speed_mps: 1.38,
            heading_noise_deg_sd: 6.0,
            gps_noise_m_sd: 3.0,
            comprehension_error_base: 0.15,
            ambiguity_factor: 2.0,
            beacon_follow_err: 0.02,
            beacon_capture_deg: 10.0,
            pointing_noise_deg_sd: 25.0,
            look_around_s: 3.0,
            time_cap_factor: 3.0,
            seed: 0,
        }
    }
}

impl AgentConfig {
    /// Zero noise and perfect comprehension.
    pub fn ideal(seed: u64) -> Self {
        Self {
            heading_noise_deg_sd: 0.0,
            gps_noise_m_sd: 0.0,
            comprehension_error_base: 0.0,
            beacon_follow_err: 0.0,
            pointing_noise_deg_sd: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [self.comprehension_error_base, self.beacon_follow_err];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SimError::Agent("probabilities must lie in [0, 1]".into()));
        }
        let sds = [self.heading_noise_deg_sd, self.gps_noise_m_sd, self.pointing_noise_deg_sd];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(SimError::Agent("noise sds must be finite and ≥ 0".into()));
        }
        if !(self.speed_mps > 0.0 && self.time_cap_factor >= 1.0 && self.ambiguity_factor >= 1.0) {
            return Err(SimError::Agent("speed must be positive, time cap and ambiguity factors ≥ 1".into()));
        }
        Ok(())
    }
}

/// Whether an instruction names the maneuver in egocentric terms.
pub fn is_explicit(utterance: &str) -> bool {
    let t = utterance.to_ascii_lowercase();
    if t.contains("to face") || t.starts_with("head ") || t.starts_with("continue forward") {
        return false;
    }
    ["turn left", "turn right", "continue straight", "make a u-turn"].iter().any(|p| t.contains(p))
}

#[derive(Debug, Clone)]
struct Branch {
    pos: LocalXY,
    bearing: HeadingDeg,
}

#[derive(Debug, Clone)]
struct Decision {
    alternatives: usize,
    correct: Branch,
    stubs: Vec<Branch>,
}

/// One intersection choice, for inspection in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub t: f64,
    pub waypoint_index: usize,
    pub alternatives: usize,
    pub err: f64,
    pub beacon_active: bool,
    pub correct: bool,
    pub chosen_bearing: HeadingDeg,
    pub waypoint_bearing: HeadingDeg,
}

fn decisions_for(route: &Route, verts: &[LocalXY]) -> Vec<Option<Decision>> {
    let n = route.steps.len();
    let mut out = vec![None; n];
    let g = &route.graph;
    if g.is_empty() {
        return out;
    }
    let on_route = |p: LocalXY| verts.iter().any(|&v| (v - p).norm() < 1.0);
    for k in 0..n.saturating_sub(1) {
        let node_pos = verts[k + 1];
        let Some(node) = g.node_near(route.from_local(node_pos), 1.0) else { continue };
        let next = verts[k + 2];
        let stubs = g
            .neighbors(node)
            .map(|j| route.to_local(g.nodes[j]))
            .filter(|&p| !on_route(p))
            .map(|p| Branch { pos: p, bearing: (p - node_pos).heading() })
            .collect();
        out[k] = Some(Decision {
            alternatives: g.degree(node).saturating_sub(1),
            correct: Branch { pos: next, bearing: (next - node_pos).heading() },
            stubs,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Waypoint(usize),
    Spur,
    Back,
}

#[derive(Debug, Clone, Copy)]
struct WrongTurn {
    node: LocalXY,
    resume: usize,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Walking,
    LookingAround { until: f64, start: f64, face: f64 },
    Done,
}

/// Everything a simulated run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub record: RunRecord,
    pub log: Vec<LogRecord>,
    pub tracker: TrackerState,
    pub decisions: Vec<DecisionTrace>,
}

/// Rejoin distance the simulated tracker uses. Noisy fixes hovering around the
/// deviation threshold would otherwise split one excursion into many.
pub const SIM_REJOIN_THRESHOLD_M: f64 = 5.0;

/// Engine settings for simulated runs: defaults plus rejoin hysteresis.
pub fn sim_engine_config() -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.tracker.rejoin_threshold_m = SIM_REJOIN_THRESHOLD_M;
    cfg
}

/// Walks `route` under `condition` until the last waypoint or the time cap.
pub fn run_sim(
    route: &Route,
    landmarks: &[Landmark],
    condition: Condition,
    agent: &AgentConfig,
    tick_hz: f64,
) -> Result<SimOutput, SimError> {
    run_sim_with(route, landmarks, condition, agent, tick_hz, &sim_engine_config())
}

pub fn run_sim_with(
    route: &Route,
    landmarks: &[Landmark],
    condition: Condition,
    agent: &AgentConfig,
    tick_hz: f64,
    engine_cfg: &EngineConfig,
) -> Result<SimOutput, SimError> {
    agent.validate()?;
    if route.steps.is_empty() {
        return Err(SimError::EmptyRoute);
    }
    if tick_hz.is_nan() || tick_hz <= 0.0 {
        return Err(SimError::Agent("tick rate must be positive".into()));
    }
    let mut verts = vec![route.to_local(route.steps[0].start)];
    verts.extend(route.steps.iter().map(|s| route.to_local(s.end)));
    let decisions = decisions_for(route, &verts);
    let n_steps = route.steps.len();

    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(agent.seed);
        r.set_stream(k);
        r
    };
    let (mut noise_rng, mut choice_rng, mut point_rng) = (stream(2), stream(3), stream(4));
    let gps = Normal::new(0.0, agent.gps_noise_m_sd).expect("validated sd");
    let compass = Normal::new(0.0, agent.heading_noise_deg_sd).expect("validated sd");
    let pointing = Normal::new(0.0, agent.pointing_noise_deg_sd).expect("validated sd");

    let mut engine = Engine::new(
        Arc::new(route.clone()),
        Arc::new(landmarks.to_vec()),
        condition,
        engine_cfg.clone(),
        InstructionBackend::Mock,
        agent.seed,
    );

    let dt = 1.0 / tick_hz;
    let cap_s = agent.time_cap_factor * route.length_m() / agent.speed_mps;
    let mut pos = verts[0];
    let mut heading = (verts[1] - verts[0]).heading();
    let mut speed;
    let mut targets: VecDeque<(LocalXY, Target)> = VecDeque::from([(verts[1], Target::Waypoint(0))]);
    let mut mode = Mode::Walking;
    let mut wrong: Option<WrongTurn> = None;
    let mut walked = 0.0;
    let mut heard: BTreeMap<usize, String> = BTreeMap::new();
    let mut traces = Vec::new();
    let mut log = Vec::new();
    let mut tick: u64 = 0;
    let mut t = 0.0;

    let completed = loop {
        // move
        match mode {
            Mode::Walking => {
                speed = agent.speed_mps;
                let mut budget = speed * dt;
                while budget > 0.0 {
                    let Some(&(target, kind)) = targets.front() else { break };
                    let to = target - pos;
                    let d = to.norm();
                    if d > budget {
                        heading = to.heading();
                        pos = pos + to * (budget / d);
                        walked += budget;
                        break;
                    }
                    if d > 0.0 {
                        heading = to.heading();
                    }
                    pos = target;
                    walked += d;
                    budget -= d;
                    targets.pop_front();
                    match kind {
                        Target::Waypoint(k) if k + 1 == n_steps => {
                            mode = Mode::Done;
                            break;
                        }
                        Target::Waypoint(k) => {
                            let next = choose_branch(
                                k,
                                decisions[k].as_ref(),
                                &verts,
                                &engine,
                                heard.get(&k).map(String::as_str),
                                condition,
                                agent,
                                &mut choice_rng,
                                t,
                                &mut traces,
                            );
                            match next {
                                Some(spur) => {
                                    targets.push_back((spur, Target::Spur));
                                    wrong = Some(WrongTurn { node: verts[k + 1], resume: k + 1 });
                                }
                                None => targets.push_back((verts[k + 2], Target::Waypoint(k + 1))),
                            }
                        }
                        Target::Spur => {
                            // dead-end spur reached without being stopped: come back
                            if let Some(w) = wrong.take() {
                                targets.push_back((w.node, Target::Back));
                                targets.push_back((verts[w.resume + 1], Target::Waypoint(w.resume)));
                            }
                        }
                        Target::Back => {}
                    }
                }
            }
            Mode::LookingAround { until, start, face } => {
                speed = 0.0;
                let sweep_s = (until - start - 1.0).max(0.5);
                let u = t - start;
                heading = if u < sweep_s {
                    HeadingDeg::new(face + 45.0 * (std::f64::consts::TAU * u / sweep_s).sin())
                } else {
                    HeadingDeg::new(face)
                };
                if t >= until {
                    mode = Mode::Walking;
                }
            }
            Mode::Done => speed = 0.0,
        }

        // sense
        let noisy = LocalXY::new(pos.east_m + gps.sample(&mut noise_rng), pos.north_m + gps.sample(&mut noise_rng));
        let sample = PoseSample {
            t,
            pos: route.from_local(noisy),
            heading: heading.offset(compass.sample(&mut noise_rng)),
            speed_mps: speed,
        };
        log.push(LogRecord { t, event: LogEvent::Pose(sample) });
        let events = engine.step(&sample).map_err(|e| SimError::Agent(e.to_string()))?;
        for ev in &events {
            if let Some(rec) = ev.to_log(t) {
                log.push(rec);
            }
            match ev {
                GuidanceEvent::Utterance(d) => {
                    heard.insert(d.waypoint_index, d.result.utterance.clone());
                }
                GuidanceEvent::Tracker(TrackerEvent::DeviationStarted { .. }) => {
                    if let (Some(w), Mode::Walking) = (wrong, mode) {
                        // conductor intervention
                        let face = route
                            .turn_waypoint(engine.tracker.current_waypoint_index)
                            .map(|wp| (route.to_local(wp) - pos).heading().value())
                            .unwrap_or(heading.value());
                        mode = Mode::LookingAround { start: t, until: t + agent.look_around_s, face };
                        targets.clear();
                        targets.push_back((w.node, Target::Back));
                        targets.push_back((verts[w.resume + 1], Target::Waypoint(w.resume)));
                        wrong = None;
                    }
                }
                _ => {}
            }
        }

        if matches!(mode, Mode::Done) && engine.is_complete() {
            break true;
        }
        if t >= cap_s {
            break false;
        }
        tick += 1;
        t = tick as f64 / tick_hz;
    };

    engine.finish();
    let tracker = engine.tracker.clone();
    let pointing_errors_deg = match (completed, pointing_truth(route)) {
        (true, Ok(task)) => {
            let pointed: Vec<HeadingDeg> =
                task.true_bearings.iter().map(|b| b.offset(pointing.sample(&mut point_rng))).collect();
            pointing_error(&task, &pointed).unwrap_or_default()
        }
        _ => Vec::new(),
    };
    let record = RunRecord {
        route_id: route.id.clone(),
        condition,
        seed: agent.seed,
        distance_walked_m: walked,
        deviation_count: tracker.deviation_count,
        deviation_intervals: tracker.deviation_intervals.clone(),
        dead_end_deviations: dead_end_deviations(route, &tracker.deviation_intervals),
        pointing_errors_deg,
        latency_samples_s: engine.latency_samples().to_vec(),
        completed,
        duration_s: t,
        note: (!completed).then(|| format!("time cap of {cap_s:.0} s reached")),
    };
    log.push(LogRecord {
        t,
        event: LogEvent::RunEnd(Box::new(RunEndPayload { record: record.clone(), tracker: tracker.clone() })),
    });
    Ok(SimOutput { record, log, tracker, decisions: traces })
}

/// Picks the branch at waypoint `k`; `Some(spur end)` when the walker goes wrong.
#[allow(clippy::too_many_arguments)]
fn choose_branch(
    k: usize,
    decision: Option<&Decision>,
    verts: &[LocalXY],
    engine: &Engine,
    heard: Option<&str>,
    condition: Condition,
    agent: &AgentConfig,
    rng: &mut ChaCha8Rng,
    t: f64,
    traces: &mut Vec<DecisionTrace>,
) -> Option<LocalXY> {
    // two draws per intersection keep choices aligned across conditions
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let d = decision?;
    let node = verts[k + 1];
    let waypoint_bearing = (verts[k + 2] - node).heading();

    let beacon_on = condition.beacon_enabled() && engine.beacon.active;
    let cue = engine.last_sample().filter(|_| beacon_on).map(|s| s.heading.rotate(engine.beacon.azimuth_deg));
    let pointed = cue.and_then(|c| {
        std::iter::once(&d.correct)
            .chain(&d.stubs)
            .map(|b| (signed_delta(c, b.bearing).abs(), b))
            .filter(|(off, _)| *off <= agent.beacon_capture_deg)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, b)| b)
    });

    let (chosen, err) = match pointed {
        Some(b) => {
            let follows = u >= agent.beacon_follow_err;
            let on_correct = (b.pos - d.correct.pos).norm() < 1e-6;
            let chosen = match (follows, on_correct) {
                (true, _) => b.clone(),
                (false, true) if !d.stubs.is_empty() => d.stubs[(v * d.stubs.len() as f64) as usize].clone(),
                _ => d.correct.clone(),
            };
            (chosen, agent.beacon_follow_err)
        }
        None => {
            let clarity = if heard.is_some_and(is_explicit) { 1.0 } else { agent.ambiguity_factor };
            let err = (agent.comprehension_error_base * d.alternatives.saturating_sub(1) as f64 * clarity).min(1.0);
            let chosen = if u < err && !d.stubs.is_empty() {
                d.stubs[((v * d.stubs.len() as f64) as usize).min(d.stubs.len() - 1)].clone()
            } else {
                d.correct.clone()
            };
            (chosen, err)
        }
    };
    let correct = (chosen.pos - d.correct.pos).norm() < 1e-6;
    traces.push(DecisionTrace {
        t,
        waypoint_index: k,
        alternatives: d.alternatives,
        err,
        beacon_active: beacon_on,
        correct,
        chosen_bearing: chosen.bearing,
        waypoint_bearing,
    });
    (!correct).then_some(chosen.pos)
}

/// Batch description: every route × condition × seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub routes: Vec<PathBuf>,
    #[serde(default = "all_conditions")]
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub landmarks: Option<PathBuf>,
    pub out: PathBuf,
}

fn all_conditions() -> Vec<Condition> {
    Condition::ALL.to_vec()
}
