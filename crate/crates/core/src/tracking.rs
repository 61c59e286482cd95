//! World tracking: progress along the turn waypoints, off-route excursions and
//! distance walked.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{bearing_deg, signed_delta};
use crate::route::{nearest_on_route, Route};
use crate::{AngleDelta, GeoPoint, HeadingDeg, LocalXY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("sample at t={got} arrived after t={prev}")]
    OutOfOrderSample { prev: f64, got: f64 },
    #[error("route is complete, no turn waypoint remains")]
    RouteComplete,
    #[error("invalid tracker config: {0}")]
    InvalidConfig(&'static str),
}

/// One position/orientation fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    /// Seconds since run start.
    pub t: f64,
    pub pos: GeoPoint,
    pub heading: HeadingDeg,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub turn_reach_radius_m: f64,
    pub deviation_threshold_m: f64,
    pub rejoin_threshold_m: f64,
    pub gps_smoothing_window: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            turn_reach_radius_m: 8.0,
            deviation_threshold_m: 10.0,
            rejoin_threshold_m: 10.0,
            gps_smoothing_window: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if !(self.turn_reach_radius_m > 0.0 && self.deviation_threshold_m > 0.0 && self.rejoin_threshold_m > 0.0) {
            return Err(TrackingError::InvalidConfig("thresholds must be positive"));
        }
        if self.rejoin_threshold_m > self.deviation_threshold_m {
            return Err(TrackingError::InvalidConfig("rejoin threshold exceeds deviation threshold"));
        }
        if self.gps_smoothing_window == 0 {
            return Err(TrackingError::InvalidConfig("smoothing window must hold at least one sample"));
        }
        Ok(())
    }
}

/// One excursion beyond the deviation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub max_off_m: f64,
    /// Turn waypoint being tracked when the excursion began.
    pub waypoint_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrackerEvent {
    TurnReached { t: f64, index: usize },
    RouteCompleted { t: f64 },
    DeviationStarted { t: f64, off_m: f64, waypoint_index: usize },
    DeviationEnded { t: f64, max_off_m: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub current_waypoint_index: usize,
    pub off_route: bool,
    /// Closed excursions; equals `deviation_intervals.len()`.
    pub deviation_count: usize,
    pub distance_walked_m: f64,
    pub deviation_intervals: Vec<DeviationInterval>,
    pub open_deviation: Option<DeviationInterval>,
    pub last_t: Option<f64>,
    pub smoothed: Option<LocalXY>,
    window: VecDeque<LocalXY>,
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_complete(&self, route: &Route) -> bool {
        self.current_waypoint_index >= route.waypoint_count()
    }

    /// Smoothed position as a geographic point.
    pub fn smoothed_pos(&self, route: &Route) -> Option<GeoPoint> {
        self.smoothed.map(|xy| route.from_local(xy))
    }

    /// Feeds one sample; returns the transitions it caused.
    pub fn ingest(
        &mut self,
        sample: &PoseSample,
        route: &Route,
        cfg: &TrackerConfig,
    ) -> Result<Vec<TrackerEvent>, TrackingError> {
        if let Some(prev) = self.last_t {
            if sample.t.is_nan() || sample.t <= prev {
                return Err(TrackingError::OutOfOrderSample { prev, got: sample.t });
            }
        }
        self.last_t = Some(sample.t);

        self.window.push_back(route.to_local(sample.pos));
        while self.window.len() > cfg.gps_smoothing_window {
            self.window.pop_front();
        }
        let n = self.window.len() as f64;
        let sum = self.window.iter().fold(LocalXY::default(), |acc, &p| acc + p);
        let smoothed = sum * (1.0 / n);
        if let Some(prev) = self.smoothed {
            self.distance_walked_m += (smoothed - prev).norm();
        }
        self.smoothed = Some(smoothed);
        let pos = route.from_local(smoothed);

        let mut events = Vec::new();
        if let Some(wp) = route.turn_waypoint(self.current_waypoint_index) {
            if crate::geo::distance_m(pos, wp) <= cfg.turn_reach_radius_m {
                events.push(TrackerEvent::TurnReached { t: sample.t, index: self.current_waypoint_index });
                self.current_waypoint_index += 1;
                if self.is_complete(route) {
                    events.push(TrackerEvent::RouteCompleted { t: sample.t });
                }
            }
        }

        let (off, _) = nearest_on_route(route, pos);
        match &mut self.open_deviation {
            None if off > cfg.deviation_threshold_m => {
                self.off_route = true;
                self.open_deviation = Some(DeviationInterval {
                    t_start: sample.t,
                    t_end: sample.t,
                    max_off_m: off,
                    waypoint_index: self.current_waypoint_index,
                });
                events.push(TrackerEvent::DeviationStarted {
                    t: sample.t,
                    off_m: off,
                    waypoint_index: self.current_waypoint_index,
                });
            }
            Some(open) => {
                open.max_off_m = open.max_off_m.max(off);
                open.t_end = sample.t;
                if off <= cfg.rejoin_threshold_m {
                    let max_off_m = open.max_off_m;
                    self.close_deviation();
                    events.push(TrackerEvent::DeviationEnded { t: sample.t, max_off_m });
                }
            }
            None => {}
        }
        Ok(events)
    }

    fn close_deviation(&mut self) {
        if let Some(iv) = self.open_deviation.take() {
            self.deviation_intervals.push(iv);
            self.deviation_count = self.deviation_intervals.len();
            self.off_route = false;
        }
    }

    /// Closes an excursion still open when the run stops.
    pub fn finish(&mut self) {
        self.close_deviation();
    }
}

/// Direction to the current turn waypoint relative to the sample's heading.
pub fn facing_delta(sample: &PoseSample, route: &Route, state: &TrackerState) -> Result<AngleDelta, TrackingError> {
    let wp = route.turn_waypoint(state.current_waypoint_index).ok_or(TrackingError::RouteComplete)?;
    Ok(match bearing_deg(sample.pos, wp) {
        Ok(b) => signed_delta(sample.heading, b),
        Err(_) => AngleDelta::new(0.0),
    })
}

/// Distance from the sample to the current turn waypoint.
pub fn distance_to_turn(sample: &PoseSample, route: &Route, state: &TrackerState) -> Result<f64, TrackingError> {
    let wp = route.turn_waypoint(state.current_waypoint_index).ok_or(TrackingError::RouteComplete)?;
    Ok(crate::geo::distance_m(sample.pos, wp))
}

/// Runs a whole recorded trace through a fresh tracker.
pub fn replay<'a>(
    samples: impl IntoIterator<Item = &'a PoseSample>,
    route: &Route,
    cfg: &TrackerConfig,
) -> Result<TrackerState, TrackingError> {
    let mut st = TrackerState::new();
    for s in samples {
        st.ingest(s, route, cfg)?;
    }
    Ok(st)
}
