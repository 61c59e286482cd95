//! Directions sources: offline fixtures, a deterministic stub, and an HTTP adapter for a
//! provider returning step lists.
//!
//! Provider payload (one leg per consecutive waypoint pair):
//!
//! ```json
//! {"status": "OK",
//!  "routes": [{"legs": [{"steps": [
//!     {"instruction": "Head north", "start_location": {"lat": 0, "lng": 0},
//!      "end_location": {"lat": 0.001, "lng": 0}, "distance": {"value": 111.2},
//!      "maneuver": "turn-left"}]}]}]}
//! ```
//!
//! A provider maneuver describes the action at the *start* of its step, while a
//! [`Step`] carries the action at its end, so maneuvers shift back by one step on
//! translation and the final step becomes `arrive`.

use std::time::Duration;

use serde::Deserialize;

use super::{IntersectionGraph, Maneuver, Poi, Route, RouteError, Step};
use crate::GeoPoint;

pub const DIRECTIONS_URL_ENV: &str = "NAV_DIRECTIONS_URL";
pub const DIRECTIONS_KEY_ENV: &str = "NAV_DIRECTIONS_KEY";

/// Matching tolerance between requested waypoints and fixture POIs.
const OFFLINE_MATCH_M: f64 = 5.0;

pub trait DirectionsClient {
    fn directions(&self, waypoints: &[GeoPoint]) -> Result<Route, RouteError>;
}

/// Requests walking directions through `waypoints` from `client`.
pub fn fetch_directions(client: &dyn DirectionsClient, waypoints: &[GeoPoint]) -> Result<Route, RouteError> {
    if waypoints.len() < 2 {
        return Err(RouteError::Schema("need at least two waypoints".into()));
    }
    client.directions(waypoints)
}

/// Serves pre-built routes whose POIs match the requested waypoints.
#[derive(Debug, Clone, Default)]
pub struct OfflineDirections {
    routes: Vec<Route>,
}

impl OfflineDirections {
    pub fn new(routes: Vec<Route>) -> Self {
        Self { routes }
    }

    pub fn fixture(&self, id: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.id == id)
    }
}

impl DirectionsClient for OfflineDirections {
    fn directions(&self, waypoints: &[GeoPoint]) -> Result<Route, RouteError> {
        self.routes
            .iter()
            .find(|r| {
                r.pois.len() == waypoints.len()
                    && r.pois.iter().zip(waypoints).all(|(p, &w)| crate::geo::distance_m(p.pos, w) <= OFFLINE_MATCH_M)
            })
            .cloned()
            .ok_or_else(|| RouteError::Transport("no offline route matches the requested waypoints".into()))
    }
}

/// Produces straight-line provider payloads between consecutive waypoints.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubDirections;

impl StubDirections {
    pub fn payload(waypoints: &[GeoPoint]) -> String {
        let legs: Vec<serde_json::Value> = waypoints
            .windows(2)
            .map(|w| {
                serde_json::json!({"steps": [{
                    "instruction": "Walk to the next waypoint",
                    "start_location": {"lat": w[0].lat_deg, "lng": w[0].lon_deg},
                    "end_location": {"lat": w[1].lat_deg, "lng": w[1].lon_deg},
                    "distance": {"value": crate::geo::distance_m(w[0], w[1])},
                    "maneuver": "straight",
                }]})
            })
            .collect();
        serde_json::json!({"status": "OK", "routes": [{"legs": legs}]}).to_string()
    }
}

impl DirectionsClient for StubDirections {
    fn directions(&self, waypoints: &[GeoPoint]) -> Result<Route, RouteError> {
        translate_provider(Self::payload(waypoints).as_bytes(), waypoints)
    }
}

/// Blocking HTTP GET against a directions endpoint.
#[derive(Debug, Clone)]
pub struct HttpDirections {
    pub url: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl HttpDirections {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        Self { url: url.into(), key, timeout: Duration::from_secs(15) }
    }
}

impl DirectionsClient for HttpDirections {
    fn directions(&self, waypoints: &[GeoPoint]) -> Result<Route, RouteError> {
        let wp = waypoints.iter().map(|p| format!("{},{}", p.lat_deg, p.lon_deg)).collect::<Vec<_>>().join("|");
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        let mut req = agent.get(&self.url).query("mode", "walking").query("waypoints", &wp);
        if let Some(key) = &self.key {
            req = req.query("key", key);
        }
        let body = req
            .call()
            .map_err(|e| RouteError::Transport(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| RouteError::Transport(e.to_string()))?;
        translate_provider(body.as_bytes(), waypoints)
    }
}

/// HTTP client when `NAV_DIRECTIONS_URL` is set, otherwise the offline fixtures.
pub fn directions_client_from_env(offline: Vec<Route>) -> Box<dyn DirectionsClient + Send + Sync> {
    match std::env::var(DIRECTIONS_URL_ENV) {
        Ok(url) if !url.is_empty() => Box::new(HttpDirections::new(url, std::env::var(DIRECTIONS_KEY_ENV).ok())),
        _ => Box::new(OfflineDirections::new(offline)),
    }
}

#[derive(Deserialize)]
struct ProviderLatLng {
    lat: f64,
    lng: f64,
}

#[derive(Deserialize)]
struct ProviderDistance {
    value: f64,
}

#[derive(Deserialize)]
struct ProviderStep {
    instruction: String,
    start_location: ProviderLatLng,
    end_location: ProviderLatLng,
    distance: ProviderDistance,
    #[serde(default)]
    maneuver: Option<String>,
}

#[derive(Deserialize)]
struct ProviderLeg {
    steps: Vec<ProviderStep>,
}

#[derive(Deserialize)]
struct ProviderRoute {
    legs: Vec<ProviderLeg>,
}

#[derive(Deserialize)]
struct ProviderPayload {
    status: String,
    routes: Vec<ProviderRoute>,
}

/// Translates a provider payload into a validated [`Route`] whose POIs are the
/// requested waypoints.
pub fn translate_provider(payload: &[u8], waypoints: &[GeoPoint]) -> Result<Route, RouteError> {
    let bad = |m: String| RouteError::ProviderSchema(m);
    let p: ProviderPayload = serde_json::from_slice(payload).map_err(|e| bad(e.to_string()))?;
    if p.status != "OK" {
        return Err(bad(format!("provider status {}", p.status)));
    }
    let route = p.routes.into_iter().next().ok_or_else(|| bad("no routes".into()))?;
    let raw: Vec<ProviderStep> = route.legs.into_iter().flat_map(|l| l.steps).collect();
    if raw.is_empty() {
        return Err(bad("route has no steps".into()));
    }
    let mut maneuvers = Vec::with_capacity(raw.len());
    for s in raw.iter().skip(1) {
        let m = match s.maneuver.as_deref() {
            None | Some("") => Maneuver::Straight,
            Some(m) => Maneuver::parse(m).ok_or_else(|| bad(format!("unknown maneuver {m}")))?,
        };
        maneuvers.push(m);
    }
    maneuvers.push(Maneuver::Arrive);
    let ll = |p: &ProviderLatLng| GeoPoint { lat_deg: p.lat, lon_deg: p.lng };
    let steps: Vec<Step> = raw
        .iter()
        .zip(maneuvers)
        .map(|(s, m)| Step {
            instruction_text: s.instruction.clone(),
            start: ll(&s.start_location),
            end: ll(&s.end_location),
            distance_m: s.distance.value,
            maneuver: m,
        })
        .collect();
    let mut polyline: Vec<GeoPoint> = steps.iter().map(|s| s.start).collect();
    polyline.push(steps[steps.len() - 1].end);
    let route = Route {
        id: format!("directions-{}", waypoints.len()),
        pois: waypoints.iter().enumerate().map(|(i, &pos)| Poi { name: format!("Waypoint {}", i + 1), pos }).collect(),
        steps,
        dead_end_index: None,
        polyline,
        graph: IntersectionGraph::default(),
    };
    route.validate().map_err(|e| bad(e.to_string()))?;
    Ok(route)
}
