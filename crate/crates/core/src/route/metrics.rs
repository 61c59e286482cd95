//! Route complexity measures: intersections, alternative paths, turn angles, turns.

use serde::{Deserialize, Serialize};

use super::{nearest_on_route, IntersectionGraph, Route, RouteError};
use crate::stats::{mean, sample_sd};

/// An on-route node must lie this close to the polyline.
const NODE_ON_ROUTE_TOLERANCE_M: f64 = 1.0;
/// Crossings at (or within this of) 180° are dead-end reversals.
const REVERSAL_EPS_DEG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteMetrics {
    pub distance_m: f64,
    pub n_intersections: usize,
    pub mean_alt_paths: f64,
    pub sd_alt_paths: f64,
    pub mean_turn_angle_deg: f64,
    pub sd_turn_angle_deg: f64,
    pub n_turns: usize,
}

impl std::fmt::Display for RouteMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "distance_m          {:.1}", self.distance_m)?;
        writeln!(f, "intersections       {}", self.n_intersections)?;
        writeln!(f, "mean_alt_paths      {:.2} (± {:.2})", self.mean_alt_paths, self.sd_alt_paths)?;
        writeln!(f, "mean_turn_angle_deg {:.2} (± {:.2})", self.mean_turn_angle_deg, self.sd_turn_angle_deg)?;
        write!(f, "turns               {}", self.n_turns)
    }
}

/// Computes the route's complexity measures from its intersection graph.
///
/// Means use every on-route crossing; the 180° reversal at a dead end is left out of
/// the turn-angle statistics only. Standard deviations are sample (n − 1). The
/// dead-end u-turn is not a turn for `n_turns`.
pub fn route_metrics(route: &Route, graph: &IntersectionGraph) -> Result<RouteMetrics, RouteError> {
    if graph.on_route.is_empty() && route.n_turns() > 0 {
        return Err(RouteError::Coverage("route turns but the graph lists no intersections".into()));
    }
    let mut alts = Vec::with_capacity(graph.on_route.len());
    let mut angles = Vec::with_capacity(graph.on_route.len());
    for (i, x) in graph.on_route.iter().enumerate() {
        let node = graph
            .nodes
            .get(x.node)
            .ok_or_else(|| RouteError::Coverage(format!("crossing {i} references missing node {}", x.node)))?;
        let (off, _) = nearest_on_route(route, *node);
        if off > NODE_ON_ROUTE_TOLERANCE_M {
            return Err(RouteError::Coverage(format!("crossing {i} node is {off:.1} m off the route")));
        }
        if x.alternatives < 1 || !(0.0..=180.0).contains(&x.turn_angle_deg) {
            return Err(RouteError::Coverage(format!("crossing {i} has invalid alternatives or angle")));
        }
        alts.push(f64::from(x.alternatives));
        if (180.0 - x.turn_angle_deg).abs() > REVERSAL_EPS_DEG {
            angles.push(x.turn_angle_deg);
        }
    }
    Ok(RouteMetrics {
        distance_m: route.length_m(),
        n_intersections: graph.on_route.len(),
        mean_alt_paths: mean(&alts).unwrap_or(0.0),
        sd_alt_paths: sample_sd(&alts).unwrap_or(0.0),
        mean_turn_angle_deg: mean(&angles).unwrap_or(0.0),
        sd_turn_angle_deg: sample_sd(&angles).unwrap_or(0.0),
        n_turns: route.n_turns(),
    })
}
