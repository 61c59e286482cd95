//! Replica routes and landmark database.
//!
//! The three routes are synthetic: straight legs on a flat local frame joined by
//! crossings whose alternative counts and turn angles match the target
//! route statistics. Each route walks out to a dead end and back through the
//! junction in front of it. Spurs (40 m dead-end walkways) give every crossing
//! its extra branches. Nothing here is random, so regeneration is byte-stable.

use std::path::{Path, PathBuf};

use crate::geo::unproject_local;
use crate::instructor::{landmarks_to_json, Landmark};
use crate::route::{IntersectionGraph, Maneuver, Poi, Route, RouteIntersection, Step};
use crate::{GeoPoint, HeadingDeg, LocalXY};

pub const SPUR_LENGTH_M: f64 = 40.0;

/// Per-route complexity figures the replicas are built to match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteTargets {
    pub id: &'static str,
    pub distance_m: f64,
    pub n_intersections: usize,
    pub mean_alt_paths: f64,
    pub sd_alt_paths: f64,
    pub mean_turn_angle_deg: f64,
    pub sd_turn_angle_deg: f64,
    pub n_turns: usize,
}

pub const ROUTE_TARGETS: [RouteTargets; 3] = [
    RouteTargets {
        id: "r1",
        distance_m: 650.0,
        n_intersections: 9,
        mean_alt_paths: 2.78,
        sd_alt_paths: 0.83,
        mean_turn_angle_deg: 67.28,
        sd_turn_angle_deg: 28.95,
        n_turns: 8,
    },
    RouteTargets {
        id: "r2",
        distance_m: 550.0,
        n_intersections: 10,
        mean_alt_paths: 2.5,
        sd_alt_paths: 0.53,
        mean_turn_angle_deg: 64.97,
        sd_turn_angle_deg: 23.05,
        n_turns: 9,
    },
    RouteTargets {
        id: "r3",
        distance_m: 600.0,
        n_intersections: 10,
        mean_alt_paths: 2.4,
        sd_alt_paths: 0.70,
        mean_turn_angle_deg: 80.65,
        sd_turn_angle_deg: 12.76,
        n_turns: 10,
    },
];

/// What happens at the end of a leg: `(label, angle, side)`, side −1 left, +1 right,
/// 0 for the dead-end reversal. Labels repeat when a node is crossed twice.
type Event = (&'static str, f64, i8);

struct Design {
    id: &'static str,
    origin: (f64, f64),
    initial_heading: f64,
    legs: &'static [f64],
    events: &'static [Event],
    /// Absolute bearings of the spurs at each node, keyed by label.
    spurs: &'static [(&'static str, &'static [f64])],
    /// Crossings whose heading change is small enough to read as "straight".
    straight_below_deg: f64,
    poi_names: [&'static str; 5],
    /// Landmark names for each leg end, in order.
    landmark_names: &'static [&'static str],
}

const DESIGNS: [Design; 3] = [
    Design {
        id: "r1",
        origin: (37.42, -122.08),
        initial_heading: 335.0,
        legs: &[71.74, 60.94, 56.1, 67.69, 62.04, 62.04, 76.6, 72.53, 53.11, 67.21],
        events: &[
            ("a", 40.0, -1),
            ("b", 90.0, -1),
            ("c", 45.0, 1),
            ("X", 115.0, -1),
            ("D", 180.0, 0),
            ("X", 90.0, -1),
            ("d", 40.0, -1),
            ("e", 73.94, -1),
            ("f", 44.3, 1),
        ],
        spurs: &[
            ("a", &[45.0, 225.0]),
            ("b", &[340.0]),
            ("c", &[137.5]),
            ("X", &[327.5]),
            ("D", &[135.0, 45.0, 225.0, 0.0]),
            ("d", &[295.0, 115.0, 350.0]),
            ("e", &[238.03]),
            ("f", &[43.21]),
        ],
        straight_below_deg: 20.0,
        poi_names: ["Visitor center", "Clock tower", "Sculpture garden", "Bookstore", "Cafe"],
        landmark_names: &[
            "fountain",
            "stone stairs",
            "red sculpture",
            "bike rack",
            "glass pavilion",
            "archway",
            "flagpole",
            "mural wall",
            "bus shelter",
            "bell tower",
        ],
    },
    Design {
        id: "r2",
        origin: (37.43, -122.08),
        initial_heading: 165.0,
        legs: &[48.21, 45.92, 50.33, 38.67, 38.32, 38.32, 39.78, 42.72, 62.42, 51.4, 47.4, 46.51],
        events: &[
            ("a", 10.0, -1),
            ("b", 65.0, -1),
            ("c", 77.28, 1),
            ("X", 90.0, 1),
            ("D", 180.0, 0),
            ("X", 90.0, 1),
            ("d", 60.0, -1),
            ("e", 65.0, 1),
            ("f", 50.0, -1),
            ("g", 75.0, -1),
            ("h", 67.42, 1),
        ],
        spurs: &[
            ("a", &[250.0]),
            ("b", &[212.5]),
            ("c", &[38.64]),
            ("X", &[77.28]),
            ("d", &[227.28]),
            ("e", &[49.78, 111.03]),
            ("f", &[237.28, 57.28]),
            ("g", &[174.78, 238.53]),
            ("h", &[350.99]),
        ],
        straight_below_deg: 20.0,
        poi_names: ["Library entrance", "Rose garden", "Amphitheater", "Art museum", "Boathouse"],
        landmark_names: &[
            "information sign",
            "statue",
            "picnic tables",
            "water feature",
            "vending kiosk",
            "metal gate",
            "stairs",
            "lamp post with banner",
            "bronze plaque",
            "concrete planter",
            "arches",
            "chess tables",
        ],
    },
    Design {
        id: "r3",
        origin: (37.44, -122.08),
        initial_heading: 130.0,
        legs: &[51.7, 43.11, 45.47, 47.4, 60.41, 60.41, 45.45, 38.2, 50.13, 63.39, 44.76, 49.56],
        events: &[
            ("a", 90.0, -1),
            ("b", 90.0, 1),
            ("c", 80.0, -1),
            ("X", 85.0, 1),
            ("D", 180.0, 0),
            ("X", 90.98, 1),
            ("d", 65.0, -1),
            ("e", 70.0, -1),
            ("f", 55.52, 1),
            ("g", 90.0, -1),
            ("h", 90.0, -1),
        ],
        spurs: &[
            ("a", &[175.0]),
            ("b", &[355.0]),
            ("c", &[180.0, 245.0, 115.0]),
            ("X", &[317.99]),
            ("d", &[103.48]),
            ("e", &[35.98]),
            ("f", &[208.74]),
            ("g", &[11.5]),
            ("h", &[281.5]),
        ],
        straight_below_deg: 20.0,
        poi_names: ["Train station", "Market hall", "Observatory", "Boat dock", "Community garden"],
        landmark_names: &[
            "drinking fountain",
            "sign post",
            "yellow bollards",
            "wooden footbridge",
            "phone booth",
            "bike share dock",
            "totem pole",
            "glass elevator",
            "kiosk",
            "sundial",
            "fence with murals",
            "brick chimney",
        ],
    },
];

/// POIs sit on these leg ends (0 = route start).
const POI_VERTICES: [usize; 5] = [0, 2, 7, 9, usize::MAX];

fn round_cm(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

struct Geometry {
    verts: Vec<LocalXY>,
    headings: Vec<HeadingDeg>,
}

fn geometry(design: &Design) -> Geometry {
    let mut verts = vec![LocalXY::new(0.0, 0.0)];
    let mut headings = Vec::with_capacity(design.legs.len());
    let mut h = HeadingDeg::new(design.initial_heading);
    for (i, &len) in design.legs.iter().enumerate() {
        headings.push(h);
        let p = verts[i] + LocalXY::along(h, len);
        verts.push(p);
        if let Some(&(_, angle, side)) = design.events.get(i) {
            h = if side == 0 { h.offset(180.0) } else { h.offset(f64::from(side) * angle) };
        }
    }
    Geometry { verts, headings }
}

fn build_route(design: &Design) -> Route {
    let origin = GeoPoint { lat_deg: design.origin.0, lon_deg: design.origin.1 };
    let geo = |p: LocalXY| unproject_local(origin, p);
    let Geometry { verts, .. } = geometry(design);
    let n = design.legs.len();

    let mut steps = Vec::with_capacity(n);
    let mut dead_end_index = None;
    for i in 0..n {
        let (start, end) = (geo(verts[i]), geo(verts[i + 1]));
        let maneuver = match design.events.get(i) {
            None => Maneuver::Arrive,
            Some(&(_, _, 0)) => {
                dead_end_index = Some(i);
                Maneuver::UTurn
            }
            Some(&(_, a, _)) if a < design.straight_below_deg => Maneuver::Straight,
            Some(&(_, _, s)) if s < 0 => Maneuver::TurnLeft,
            Some(_) => Maneuver::TurnRight,
        };
        let distance_m = crate::geo::distance_m(start, end);
        let then = match maneuver {
            Maneuver::TurnLeft => "turn left",
            Maneuver::TurnRight => "turn right",
            Maneuver::Straight => "continue straight",
            Maneuver::UTurn => "make a U-turn",
            Maneuver::Arrive => "arrive",
        };
        steps.push(Step {
            instruction_text: format!("Walk {:.0} m, then {then}", distance_m),
            start,
            end,
            distance_m,
            maneuver,
        });
    }

    // Graph: one node per distinct vertex, then the spur ends.
    let mut nodes: Vec<LocalXY> = Vec::new();
    let node_of = |p: LocalXY, nodes: &mut Vec<LocalXY>| match nodes.iter().position(|&q| (q - p).norm() < 0.01) {
        Some(i) => i,
        None => {
            nodes.push(p);
            nodes.len() - 1
        }
    };
    let vert_nodes: Vec<usize> = verts.iter().map(|&v| node_of(v, &mut nodes)).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for w in vert_nodes.windows(2) {
        let e = (w[0].min(w[1]), w[0].max(w[1]));
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    for &(label, bearings) in design.spurs {
        let k = design.events.iter().position(|e| e.0 == label).expect("spur label names an event");
        let at = vert_nodes[k + 1];
        for &b in bearings {
            let end = node_of(nodes[at] + LocalXY::along(HeadingDeg::new(b), SPUR_LENGTH_M), &mut nodes);
            edges.push((at, end));
        }
    }
    let degree = |i: usize| edges.iter().filter(|&&(a, b)| a == i || b == i).count();
    let on_route = design
        .events
        .iter()
        .enumerate()
        .filter_map(|(k, &(_, angle, _))| {
            let node = vert_nodes[k + 1];
            let alternatives = degree(node) as u32 - 1;
            (alternatives > 0).then_some(RouteIntersection { node, alternatives, turn_angle_deg: angle })
        })
        .collect();

    let pois = POI_VERTICES
        .iter()
        .zip(design.poi_names)
        .map(|(&v, name)| Poi { name: name.into(), pos: geo(verts[v.min(n)]) })
        .collect();

    Route {
        id: design.id.into(),
        steps,
        pois,
        dead_end_index,
        polyline: verts.iter().map(|&p| geo(p)).collect(),
        graph: IntersectionGraph { nodes: nodes.into_iter().map(geo).collect(), edges, on_route },
    }
}

/// The three replica routes, in id order.
pub fn gen_replica_routes() -> Vec<Route> {
    DESIGNS.iter().map(build_route).collect()
}

pub fn replica_route(id: &str) -> Option<Route> {
    DESIGNS.iter().find(|s| s.id == id).map(build_route)
}

/// Three landmarks at every turn waypoint of every replica: a distinctive one just
/// past the turn on the turning side, a tree on the other side and a generic
/// street fixture behind the walker's shoulder.
pub fn gen_landmark_db() -> Vec<Landmark> {
    let mut db = Vec::new();
    for design in &DESIGNS {
        let origin = GeoPoint { lat_deg: design.origin.0, lon_deg: design.origin.1 };
        let Geometry { verts, headings } = geometry(design);
        for (i, h) in headings.iter().enumerate() {
            let at = verts[i + 1];
            let side = match design.events.get(i) {
                Some(&(_, _, s)) if s < 0 => -1.0,
                _ => 1.0,
            };
            let right = h.offset(90.0);
            let place = |ahead: f64, across: f64| {
                unproject_local(origin, at + LocalXY::along(*h, ahead) + LocalXY::along(right, across))
            };
            let tag = |kind: &str| vec![design.id.to_string(), format!("wp{i}"), kind.to_string()];
            let name = design.landmark_names[i % design.landmark_names.len()];
            db.push(Landmark {
                name: name.into(),
                pos: place(6.0, 8.0 * side),
                uniqueness: 0.9,
                tags: tag("distinctive"),
            });
            db.push(Landmark { name: "tree".into(), pos: place(4.0, -7.0 * side), uniqueness: 0.2, tags: tag("tree") });
            let (generic, u) = if i % 2 == 0 { ("trash can", 0.4) } else { ("bench", 0.45) };
            db.push(Landmark {
                name: generic.into(),
                pos: place(-5.0, 6.0 * side),
                uniqueness: u,
                tags: tag("generic"),
            });
        }
    }
    for l in &mut db {
        l.pos = GeoPoint { lat_deg: round_7(l.pos.lat_deg), lon_deg: round_7(l.pos.lon_deg) };
    }
    db
}

fn round_7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

/// Writes `r1.json`, `r2.json`, `r3.json` and `landmarks.json` into `dir`.
pub fn write_fixtures(dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in gen_replica_routes() {
        let p = dir.join(format!("{}.json", r.id));
        std::fs::write(&p, r.to_document_json() + "\n")?;
        written.push(p);
    }
    let p = dir.join("landmarks.json");
    std::fs::write(&p, landmarks_to_json(&gen_landmark_db()) + "\n")?;
    written.push(p);
    Ok(written)
}

/// Planar leg lengths as designed, for checks against the geodesic step lengths.
pub fn design_leg_lengths(id: &str) -> Option<Vec<f64>> {
    DESIGNS.iter().find(|s| s.id == id).map(|s| s.legs.iter().copied().map(round_cm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructor::contains_cardinal;
    use crate::route::route_metrics;
    use crate::stats::{mean, sample_sd};
    use approx::assert_abs_diff_eq;

    #[test]
    fn replicas_reproduce_targets() {
        for (r, t) in gen_replica_routes().iter().zip(ROUTE_TARGETS) {
            r.validate().unwrap();
            assert_eq!(r.id, t.id);
            let m = route_metrics(r, &r.graph).unwrap();
            assert_abs_diff_eq!(m.distance_m, t.distance_m, epsilon = 1.0);
            assert_eq!(m.n_intersections, t.n_intersections, "{}", t.id);
            assert_eq!(m.n_turns, t.n_turns, "{}", t.id);
            assert_abs_diff_eq!(m.mean_alt_paths, t.mean_alt_paths, epsilon = 0.01);
            assert_abs_diff_eq!(m.sd_alt_paths, t.sd_alt_paths, epsilon = 0.01);
            assert_abs_diff_eq!(m.mean_turn_angle_deg, t.mean_turn_angle_deg, epsilon = 0.01);
            assert_abs_diff_eq!(m.sd_turn_angle_deg, t.sd_turn_angle_deg, epsilon = 0.01);
        }
    }

    #[test]
    fn alternative_multisets() {
        let expect: [&[u32]; 3] =
            [&[2, 2, 2, 2, 3, 3, 3, 4, 4], &[2, 2, 2, 2, 2, 3, 3, 3, 3, 3], &[2, 2, 2, 2, 2, 2, 2, 3, 3, 4]];
        for (r, e) in gen_replica_routes().iter().zip(expect) {
            let mut alts: Vec<u32> = r.graph.on_route.iter().map(|x| x.alternatives).collect();
            alts.sort_unstable();
            assert_eq!(alts, e, "{}", r.id);
        }
        let r2: Vec<f64> = [2.0; 5].into_iter().chain([3.0; 5]).collect();
        assert_abs_diff_eq!(mean(&r2).unwrap(), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sample_sd(&r2).unwrap(), (2.5_f64 / 9.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn recorded_angles_match_geometry() {
        for r in gen_replica_routes() {
            let local = r.local_polyline();
            for (k, s) in r.steps.iter().enumerate().take(r.steps.len() - 1) {
                let inn = (local[k + 1] - local[k]).heading();
                let out = (local[k + 2] - local[k + 1]).heading();
                let turn = crate::geo::signed_delta(inn, out).abs();
                if let Some(x) = r.graph.on_route.iter().find(|x| {
                    crate::geo::distance_m(r.graph.nodes[x.node], s.end) < 0.5 && (x.turn_angle_deg - turn).abs() < 0.05
                }) {
                    assert!(x.turn_angle_deg <= 180.0);
                } else {
                    assert!(r.dead_end_index.is_some(), "{} step {k} crossing not recorded", r.id);
                    assert_eq!(Some(k), r.dead_end_index, "{} step {k} turn {turn:.2} missing", r.id);
                }
            }
        }
    }

    #[test]
    fn alternatives_equal_degree_minus_one() {
        for r in gen_replica_routes() {
            for x in &r.graph.on_route {
                assert_eq!(x.alternatives as usize, r.graph.degree(x.node) - 1);
            }
        }
    }

    #[test]
    fn dead_end_and_pois() {
        let routes = gen_replica_routes();
        for r in &routes {
            assert_eq!(r.pois.len(), 5);
            let d = r.dead_end_index.expect("dead end");
            assert_eq!(r.steps[d].maneuver, Maneuver::UTurn);
        }
        // r1's dead end is itself an intersection
        let r1 = &routes[0];
        let d = r1.steps[r1.dead_end_index.unwrap()].end;
        let node = r1.graph.node_near(d, 0.1).unwrap();
        assert!(r1.graph.degree(node) > 2);
    }

    #[test]
    fn step_lengths_agree_with_design() {
        for r in gen_replica_routes() {
            let legs = design_leg_lengths(&r.id).unwrap();
            for (s, l) in r.steps.iter().zip(legs) {
                assert_abs_diff_eq!(s.distance_m, l, epsilon = 0.05);
            }
            assert!((r.length_m() - r.polyline_length_m()).abs() / r.length_m() < 0.01);
        }
    }

    #[test]
    fn landmark_db_properties() {
        let db = gen_landmark_db();
        assert!(db.iter().all(|l| !contains_cardinal(&l.name)));
        assert!(db.iter().filter(|l| l.name == "tree").all(|l| l.uniqueness == 0.2));
        for r in gen_replica_routes() {
            for s in &r.steps {
                let near: Vec<_> = db.iter().filter(|l| crate::geo::distance_m(l.pos, s.end) < 15.0).collect();
                assert!(near.len() >= 3, "{}", r.id);
                assert!(near.iter().any(|l| l.uniqueness >= 0.8));
            }
        }
    }

    #[test]
    fn regeneration_is_stable() {
        assert_eq!(gen_replica_routes(), gen_replica_routes());
        assert_eq!(landmarks_to_json(&gen_landmark_db()), landmarks_to_json(&gen_landmark_db()));
    }

    #[test]
    fn written_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_fixtures(dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for r in gen_replica_routes() {
            let back = crate::route::load_route_file(dir.path().join(format!("{}.json", r.id))).unwrap();
            assert_eq!(back, r);
        }
        let db = crate::instructor::load_landmarks_file(dir.path().join("landmarks.json")).unwrap();
        assert_eq!(db, gen_landmark_db());
    }
}
