//! Route data model: steps, POIs, the dead-end marker and the intersection graph.

mod directions;
mod document;
mod metrics;

pub use directions::{
    directions_client_from_env, fetch_directions, translate_provider, DirectionsClient, HttpDirections,
    OfflineDirections, StubDirections, DIRECTIONS_KEY_ENV, DIRECTIONS_URL_ENV,
};
pub use document::{load_route, load_route_file, RouteDocument};
pub use metrics::{route_metrics, RouteMetrics};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{point_segment_distance, project_unchecked};
use crate::LocalXY;
use crate::{GeoPoint, HeadingDeg};

/// Step ends closer than this are considered the same point.
const CONTINUITY_TOLERANCE_M: f64 = 0.05;
/// Step endpoints must lie this close to the polyline.
const POLYLINE_TOLERANCE_M: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("route schema: {0}")]
    Schema(String),
    #[error("step {step} does not start where step {} ends ({gap_m:.2} m gap)", step - 1)]
    Continuity { step: usize, gap_m: f64 },
    #[error("dead end index {index} is not a u-turn step")]
    DeadEnd { index: usize },
    #[error("intersection graph does not cover the route: {0}")]
    Coverage(String),
    #[error("directions transport: {0}")]
    Transport(String),
    #[error("directions provider payload: {0}")]
    ProviderSchema(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// What the walker does at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maneuver {
    TurnLeft,
    TurnRight,
    Straight,
    UTurn,
    Arrive,
}

impl Maneuver {
    pub fn is_turn(self) -> bool {
        matches!(self, Maneuver::TurnLeft | Maneuver::TurnRight)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::TurnLeft => "turn-left",
            Maneuver::TurnRight => "turn-right",
            Maneuver::Straight => "straight",
            Maneuver::UTurn => "u-turn",
            Maneuver::Arrive => "arrive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "turn-left" => Maneuver::TurnLeft,
            "turn-right" => Maneuver::TurnRight,
            "straight" => Maneuver::Straight,
            "u-turn" | "uturn-left" | "uturn-right" => Maneuver::UTurn,
            "arrive" => Maneuver::Arrive,
            _ => return None,
        })
    }
}

/// One leg of walking directions. The maneuver happens at `end`, which is the
/// step's turn waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub instruction_text: String,
    pub start: GeoPoint,
    pub end: GeoPoint,
    pub distance_m: f64,
    pub maneuver: Maneuver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: String,
    pub pos: GeoPoint,
}

/// An intersection crossed by the route. A node the route crosses twice (the
/// junction in front of a dead end) appears once per crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteIntersection {
    pub node: usize,
    /// Incident edges minus the inbound one.
    pub alternatives: u32,
    /// Unsigned heading change at the crossing, `[0, 180]`.
    pub turn_angle_deg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntersectionGraph {
    pub nodes: Vec<GeoPoint>,
    pub edges: Vec<(usize, usize)>,
    pub on_route: Vec<RouteIntersection>,
}

impl IntersectionGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == node || b == node).count()
    }

    /// Nodes adjacent to `node`, in edge order.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == node {
                Some(b)
            } else if b == node {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Graph node within `tol_m` of `p`, nearest first.
    pub fn node_near(&self, p: GeoPoint, tol_m: f64) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| (i, crate::geo::distance_m(n, p)))
            .filter(|&(_, d)| d <= tol_m)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub steps: Vec<Step>,
    pub pois: Vec<Poi>,
    pub dead_end_index: Option<usize>,
    pub polyline: Vec<GeoPoint>,
    #[serde(default)]
    pub graph: IntersectionGraph,
}

impl Route {
    /// Checks the structural invariants: at least one step, positive step lengths,
    /// a continuous step chain, a u-turn at the dead end and a polyline through
    /// every step endpoint.
    pub fn validate(&self) -> Result<(), RouteError> {
        if self.steps.is_empty() {
            return Err(RouteError::Schema("route has no steps".into()));
        }
        if self.polyline.len() < 2 {
            return Err(RouteError::Schema("polyline needs at least two points".into()));
        }
        for p in self.polyline.iter().chain(self.pois.iter().map(|p| &p.pos)) {
            if !p.is_valid() {
                return Err(RouteError::Schema(format!("invalid coordinate {p:?}")));
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.distance_m.is_nan() || s.distance_m <= 0.0 || !s.start.is_valid() || !s.end.is_valid() {
                return Err(RouteError::Schema(format!("step {i} has invalid geometry or distance")));
            }
        }
        for (i, pair) in self.steps.windows(2).enumerate() {
            let gap = crate::geo::distance_m(pair[0].end, pair[1].start);
            if gap > CONTINUITY_TOLERANCE_M {
                return Err(RouteError::Continuity { step: i + 1, gap_m: gap });
            }
        }
        if let Some(idx) = self.dead_end_index {
            match self.steps.get(idx) {
                Some(s) if s.maneuver == Maneuver::UTurn => {}
                _ => return Err(RouteError::DeadEnd { index: idx }),
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            for p in [s.start, s.end] {
                let (d, _) = nearest_on_route(self, p);
                if d > POLYLINE_TOLERANCE_M {
                    return Err(RouteError::Schema(format!("step {i} endpoint is {d:.2} m off the polyline")));
                }
            }
        }
        for e in &self.graph.edges {
            if e.0 >= self.graph.nodes.len() || e.1 >= self.graph.nodes.len() {
                return Err(RouteError::Schema(format!("graph edge {e:?} references a missing node")));
            }
        }
        Ok(())
    }

    pub fn origin(&self) -> GeoPoint {
        self.polyline[0]
    }

    /// The point the walker must reach at the end of each step.
    pub fn turn_waypoint(&self, index: usize) -> Option<GeoPoint> {
        self.steps.get(index).map(|s| s.end)
    }

    pub fn waypoint_count(&self) -> usize {
        self.steps.len()
    }

    pub fn length_m(&self) -> f64 {
        self.steps.iter().map(|s| s.distance_m).sum()
    }

    pub fn polyline_length_m(&self) -> f64 {
        self.polyline.windows(2).map(|w| crate::geo::distance_m(w[0], w[1])).sum()
    }

    pub fn n_turns(&self) -> usize {
        self.steps.iter().filter(|s| s.maneuver.is_turn()).count()
    }

    /// Polyline projected into the route's local frame (origin = first polyline point).
    pub fn local_polyline(&self) -> Vec<LocalXY> {
        let o = self.origin();
        self.polyline.iter().map(|&p| project_unchecked(o, p)).collect()
    }

    pub fn to_local(&self, p: GeoPoint) -> LocalXY {
        project_unchecked(self.origin(), p)
    }

    pub fn from_local(&self, xy: LocalXY) -> GeoPoint {
        crate::geo::unproject_local(self.origin(), xy)
    }

    /// Initial bearing of a step.
    pub fn step_bearing(&self, index: usize) -> Option<HeadingDeg> {
        let s = self.steps.get(index)?;
        crate::geo::bearing_deg(s.start, s.end).ok()
    }
}

/// Distance from `p` to the closest point of the route polyline, with the index of
/// that polyline segment. Ties go to the lower segment index.
pub fn nearest_on_route(route: &Route, p: GeoPoint) -> (f64, usize) {
    let o = route.origin();
    let q = project_unchecked(o, p);
    let mut best = (f64::INFINITY, 0usize);
    let mut prev = project_unchecked(o, route.polyline[0]);
    for (i, &next) in route.polyline.iter().skip(1).enumerate() {
        let next = project_unchecked(o, next);
        let (d, _) = point_segment_distance(q, prev, next);
        if d < best.0 {
            best = (d, i);
        }
        prev = next;
    }
    best
}
