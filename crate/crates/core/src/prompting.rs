//! When to ask the instructor for guidance, and what to send it.
//!
//! Two situations trigger a prompt:
//!
//! 1. the walker stands still and looks around (every sample in the window slower
//!    than `stationary_speed_mps`, heading range over the window at least
//!    `look_around_min_sweep_deg`) and ends up facing roughly toward the turn;
//! 2. the walker is moving and within `proximity_m` of the turn waypoint.
//!
//! Both are rate limited by a cooldown and a per-waypoint cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::signed_delta;
use crate::route::{Route, Step};
use crate::tracking::{distance_to_turn, facing_delta, PoseSample, TrackerState, TrackingError};
use crate::{AngleDelta, GeoPoint, HeadingDeg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTriggerConfig {
    pub align_deg: f64,
    pub proximity_m: f64,
    pub stationary_speed_mps: f64,
    pub stationary_window_s: f64,
    pub look_around_min_sweep_deg: f64,
    pub cooldown_s: f64,
    pub per_waypoint_max: u32,
}

impl Default for PromptTriggerConfig {
    fn default() -> Self {
        Self {
            align_deg: 25.0,
            proximity_m: 30.0,
            stationary_speed_mps: 0.3,
            stationary_window_s: 2.0,
            look_around_min_sweep_deg: 40.0,
            cooldown_s: 15.0,
            per_waypoint_max: 2,
        }
    }
}

impl PromptTriggerConfig {
    pub fn is_valid(&self) -> bool {
        [
            self.align_deg,
            self.proximity_m,
            self.stationary_speed_mps,
            self.stationary_window_s,
            self.look_around_min_sweep_deg,
            self.cooldown_s,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite())
            && self.per_waypoint_max > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Standing still and looking around.
    LookAround,
    /// Walking up to the turn.
    Approach,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::LookAround => 1,
            Scenario::Approach => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerFired {
    pub scenario: Scenario,
    pub waypoint_index: usize,
    pub t: f64,
}

/// Rate-limiting memory carried between calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub last_fired_t: Option<f64>,
    pub fired_per_waypoint: BTreeMap<usize, u32>,
}

impl PromptState {
    fn allows(&self, t: f64, waypoint: usize, cfg: &PromptTriggerConfig) -> bool {
        let cooled = self.last_fired_t.is_none_or(|last| t - last >= cfg.cooldown_s);
        let count = self.fired_per_waypoint.get(&waypoint).copied().unwrap_or(0);
        cooled && count < cfg.per_waypoint_max
    }

    fn record(&mut self, t: f64, waypoint: usize) {
        self.last_fired_t = Some(t);
        *self.fired_per_waypoint.entry(waypoint).or_insert(0) += 1;
    }
}

/// Range of the unwrapped heading over `samples`, degrees.
pub fn heading_sweep(samples: &[PoseSample]) -> f64 {
    let Some(first) = samples.first() else { return 0.0 };
    let (mut lo, mut hi, mut acc) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut prev = first.heading;
    for s in &samples[1..] {
        acc += signed_delta(prev, s.heading).value();
        prev = s.heading;
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    hi - lo
}

/// Samples within the trailing window, provided the history covers all of it.
fn full_window(history: &[PoseSample], window_s: f64) -> Option<&[PoseSample]> {
    let now = history.last()?.t;
    let start = now - window_s;
    if history[0].t > start + 1e-9 {
        return None;
    }
    let from = history.iter().rposition(|s| s.t <= start + 1e-9).unwrap_or(0);
    Some(&history[from..])
}

/// Decides whether the latest sample in `history` fires a prompt. On success the
/// firing is recorded in `state`.
pub fn step_trigger(
    state: &mut PromptState,
    history: &[PoseSample],
    tracker: &TrackerState,
    route: &Route,
    cfg: &PromptTriggerConfig,
) -> Option<TriggerFired> {
    let now = history.last()?;
    let waypoint = tracker.current_waypoint_index;
    if !state.allows(now.t, waypoint, cfg) {
        return None;
    }
    let delta = facing_delta(now, route, tracker).ok()?;
    let dist = distance_to_turn(now, route, tracker).ok()?;

    let scenario = if let Some(win) = full_window(history, cfg.stationary_window_s).filter(|w| {
        w.iter().all(|s| s.speed_mps < cfg.stationary_speed_mps)
            && heading_sweep(w) >= cfg.look_around_min_sweep_deg
            && delta.abs() <= cfg.align_deg
    }) {
        debug_assert!(!win.is_empty());
        Some(Scenario::LookAround)
    } else if dist < cfg.proximity_m && now.speed_mps >= cfg.stationary_speed_mps {
        Some(Scenario::Approach)
    } else {
        None
    }?;
    state.record(now.t, waypoint);
    Some(TriggerFired { scenario, waypoint_index: waypoint, t: now.t })
}

/// Everything the instructor gets to see for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPacket {
    /// Handle to a point-of-view capture; empty when there is no camera.
    pub image_ref: String,
    pub pos: GeoPoint,
    pub heading: HeadingDeg,
    pub delta_to_turn: AngleDelta,
    pub dist_to_turn_m: f64,
    /// The step whose end is the current turn waypoint.
    pub step: Step,
    pub waypoint_index: usize,
}

pub fn build_packet(
    sample: &PoseSample,
    tracker: &TrackerState,
    route: &Route,
    image_ref: &str,
) -> Result<ContextPacket, TrackingError> {
    let index = tracker.current_waypoint_index;
    let step = route.steps.get(index).ok_or(TrackingError::RouteComplete)?.clone();
    Ok(ContextPacket {
        image_ref: image_ref.to_string(),
        pos: sample.pos,
        heading: sample.heading,
        delta_to_turn: facing_delta(sample, route, tracker)?,
        dist_to_turn_m: distance_to_turn(sample, route, tracker)?,
        step,
        waypoint_index: index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::test_support::{at, l_shaped};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose(t: f64, north: f64, heading: f64, speed: f64) -> PoseSample {
        PoseSample { t, pos: at(0.0, north), heading: HeadingDeg::new(heading), speed_mps: speed }
    }

    #[test]
    fn approach_fires_inside_proximity() {
        let r = l_shaped();
        let tr = TrackerState::new();
        let cfg = PromptTriggerConfig::default();
        let mut st = PromptState::default();
        let fired = step_trigger(&mut st, &[pose(10.0, 71.0, 0.0, 1.4)], &tr, &r, &cfg).unwrap();
        assert_eq!(fired.scenario, Scenario::Approach);
        assert_eq!(fired.scenario.number(), 2);
        let mut fresh = PromptState::default();
        assert!(step_trigger(&mut fresh, &[pose(10.0, 69.0, 0.0, 1.4)], &tr, &r, &cfg).is_none());
    }

    #[test]
    fn standing_near_turn_is_not_approach() {
        let r = l_shaped();
        let mut st = PromptState::default();
        let h = [pose(10.0, 80.0, 0.0, 0.0)];
        assert!(step_trigger(&mut st, &h, &TrackerState::new(), &r, &PromptTriggerConfig::default()).is_none());
    }

    #[test]
    fn look_around_fires_once_settled() {
        let r = l_shaped();
        let cfg = PromptTriggerConfig::default();
        let mut st = PromptState::default();
        // 3 s standing still; heading swings from -50 to +10, then settles at 10
        let history: Vec<PoseSample> = (0..=30)
            .map(|i| {
                let t = f64::from(i) * 0.1;
                let h = if t < 1.0 {
                    -50.0
                } else if t < 2.5 {
                    -50.0 + 40.0 * (t - 1.0)
                } else {
                    10.0
                };
                pose(t, 20.0, h, 0.05)
            })
            .collect();
        let fired = step_trigger(&mut st, &history, &TrackerState::new(), &r, &cfg).unwrap();
        assert_eq!(fired.scenario, Scenario::LookAround);
    }

    #[test]
    fn look_around_needs_a_full_window_and_stillness() {
        let r = l_shaped();
        let cfg = PromptTriggerConfig::default();
        let sweep = |speed_at: fn(usize) -> f64| -> Vec<PoseSample> {
            (0..=20).map(|i| pose(f64::from(i as u32) * 0.1, 20.0, -40.0 + 2.5 * i as f64, speed_at(i))).collect()
        };
        let mut st = PromptState::default();
        assert!(step_trigger(&mut st, &sweep(|_| 0.1), &TrackerState::new(), &r, &cfg).is_some());
        // mean speed below threshold, but one sample is not
        let mut st = PromptState::default();
        let h = sweep(|i| if i == 7 { 1.0 } else { 0.1 });
        assert!(step_trigger(&mut st, &h, &TrackerState::new(), &r, &cfg).is_none());
        let mut st = PromptState::default();
        assert!(step_trigger(&mut st, &sweep(|_| 0.1)[5..], &TrackerState::new(), &r, &cfg).is_none());
    }

    #[test]
    fn cooldown_and_cap() {
        let r = l_shaped();
        let cfg = PromptTriggerConfig::default();
        let tr = TrackerState::new();
        let mut st = PromptState::default();
        assert!(step_trigger(&mut st, &[pose(0.0, 75.0, 0.0, 1.4)], &tr, &r, &cfg).is_some());
        assert!(step_trigger(&mut st, &[pose(14.9, 80.0, 0.0, 1.4)], &tr, &r, &cfg).is_none());
        assert!(step_trigger(&mut st, &[pose(15.0, 80.0, 0.0, 1.4)], &tr, &r, &cfg).is_some());
        assert!(step_trigger(&mut st, &[pose(40.0, 85.0, 0.0, 1.4)], &tr, &r, &cfg).is_none());
        assert_eq!(st.fired_per_waypoint[&0], 2);
    }

    #[test]
    fn packet_fields() {
        let r = l_shaped();
        let tr = TrackerState::new();
        let p = build_packet(&pose(1.0, 80.0, 0.0, 1.4), &tr, &r, "").unwrap();
        assert_abs_diff_eq!(p.delta_to_turn.value(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.dist_to_turn_m, 20.0, epsilon = 0.01);
        assert!(p.image_ref.is_empty());
        assert_eq!(p.waypoint_index, 0);
        let q = build_packet(&pose(1.0, 80.0, 90.0, 1.4), &tr, &r, "frame-7").unwrap();
        assert_abs_diff_eq!(q.delta_to_turn.value(), -90.0, epsilon = 1e-6);
        assert_eq!(q.image_ref, "frame-7");
        let mut done = TrackerState::new();
        done.current_waypoint_index = 2;
        assert_eq!(build_packet(&pose(1.0, 80.0, 0.0, 1.4), &done, &r, ""), Err(TrackingError::RouteComplete));
    }

    proptest! {
        #[test]
        fn rate_limits_hold_on_any_stream(
            steps in proptest::collection::vec((0.05f64..3.0, 0.0f64..100.0, 0.0f64..2.0, 0.0f64..360.0), 1..300)
        ) {
            let r = l_shaped();
            let cfg = PromptTriggerConfig::default();
            let tr = TrackerState::new();
            let mut st = PromptState::default();
            let mut history = Vec::new();
            let mut t = 0.0;
            let mut fired_at = Vec::new();
            for (dt, north, speed, heading) in steps {
                t += dt;
                history.push(pose(t, north, heading, speed));
                if let Some(f) = step_trigger(&mut st, &history, &tr, &r, &cfg) {
                    if f.scenario == Scenario::LookAround {
                        let win = full_window(&history, cfg.stationary_window_s).unwrap();
                        prop_assert!(win.iter().all(|s| s.speed_mps < cfg.stationary_speed_mps));
                    }
                    fired_at.push(f.t);
                }
            }
            prop_assert!(fired_at.len() <= cfg.per_waypoint_max as usize);
            for w in fired_at.windows(2) {
                prop_assert!(w[1] - w[0] >= cfg.cooldown_s);
            }
        }
    }
}
