//! JSON route file format.
//!
//! ```json
//! {"id": "r1",
//!  "polyline": [[lat, lon], ...],
//!  "steps": [{"instruction": "...", "start": [lat, lon], "end": [lat, lon],
//!             "distance_m": 71.7, "maneuver": "turn-left"}],
//!  "pois": [{"name": "...", "lat": 37.4, "lon": -122.1}],
//!  "dead_end_index": 4,
//!  "graph": {"nodes": [[lat, lon]], "edges": [[0, 1]],
//!            "on_route": [{"node": 1, "alternatives": 2, "turn_angle_deg": 40.0}]}}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntersectionGraph, Maneuver, Poi, Route, RouteError, RouteIntersection, Step};
use crate::GeoPoint;

type LatLon = [f64; 2];

fn point(p: LatLon) -> GeoPoint {
    GeoPoint { lat_deg: p[0], lon_deg: p[1] }
}

fn latlon(p: GeoPoint) -> LatLon {
    [p.lat_deg, p.lon_deg]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    instruction: String,
    start: LatLon,
    end: LatLon,
    distance_m: f64,
    maneuver: Maneuver,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoiDoc {
    name: String,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OnRouteDoc {
    node: usize,
    alternatives: u32,
    turn_angle_deg: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<LatLon>,
    edges: Vec<[usize; 2]>,
    on_route: Vec<OnRouteDoc>,
}

/// On-disk shape of a route file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteDocument {
    id: String,
    polyline: Vec<LatLon>,
    steps: Vec<StepDoc>,
    pois: Vec<PoiDoc>,
    #[serde(default)]
    dead_end_index: Option<usize>,
    #[serde(default)]
    graph: GraphDoc,
}

impl From<&Route> for RouteDocument {
    fn from(r: &Route) -> Self {
        RouteDocument {
            id: r.id.clone(),
            polyline: r.polyline.iter().copied().map(latlon).collect(),
            steps: r
                .steps
                .iter()
                .map(|s| StepDoc {
                    instruction: s.instruction_text.clone(),
                    start: latlon(s.start),
                    end: latlon(s.end),
                    distance_m: s.distance_m,
                    maneuver: s.maneuver,
                })
                .collect(),
            pois: r
                .pois
                .iter()
                .map(|p| PoiDoc { name: p.name.clone(), lat: p.pos.lat_deg, lon: p.pos.lon_deg })
                .collect(),
            dead_end_index: r.dead_end_index,
            graph: GraphDoc {
                nodes: r.graph.nodes.iter().copied().map(latlon).collect(),
                edges: r.graph.edges.iter().map(|&(a, b)| [a, b]).collect(),
                on_route: r
                    .graph
                    .on_route
                    .iter()
                    .map(|o| OnRouteDoc {
                        node: o.node,
                        alternatives: o.alternatives,
                        turn_angle_deg: o.turn_angle_deg,
                    })
                    .collect(),
            },
        }
    }
}

impl From<RouteDocument> for Route {
    fn from(d: RouteDocument) -> Self {
        Route {
            id: d.id,
            steps: d
                .steps
                .into_iter()
                .map(|s| Step {
                    instruction_text: s.instruction,
                    start: point(s.start),
                    end: point(s.end),
                    distance_m: s.distance_m,
                    maneuver: s.maneuver,
                })
                .collect(),
            pois: d
                .pois
                .into_iter()
                .map(|p| Poi { name: p.name, pos: GeoPoint { lat_deg: p.lat, lon_deg: p.lon } })
                .collect(),
            dead_end_index: d.dead_end_index,
            polyline: d.polyline.into_iter().map(point).collect(),
            graph: IntersectionGraph {
                nodes: d.graph.nodes.into_iter().map(point).collect(),
                edges: d.graph.edges.into_iter().map(|[a, b]| (a, b)).collect(),
                on_route: d
                    .graph
                    .on_route
                    .into_iter()
                    .map(|o| RouteIntersection {
                        node: o.node,
                        alternatives: o.alternatives,
                        turn_angle_deg: o.turn_angle_deg,
                    })
                    .collect(),
            },
        }
    }
}

/// Parses and validates a route file.
pub fn load_route(document: &[u8]) -> Result<Route, RouteError> {
    let doc: RouteDocument = serde_json::from_slice(document).map_err(|e| RouteError::Schema(e.to_string()))?;
    let route = Route::from(doc);
    route.validate()?;
    Ok(route)
}

pub fn load_route_file(path: impl AsRef<Path>) -> Result<Route, RouteError> {
    load_route(&std::fs::read(path)?)
}

impl Route {
    /// Serializes into the route file format.
    pub fn to_document_json(&self) -> String {
        serde_json::to_string_pretty(&RouteDocument::from(self)).expect("route document serializes")
    }
}
