use std::path::Path;

use nav_core::engine::Condition;
use nav_core::geo::signed_delta;
use nav_core::instructor::{load_landmarks_file, Landmark};
use nav_core::metrics::log_to_string;
use nav_core::route::{load_route_file, Route};
use nav_core::simkit::{run_sim, AgentConfig, LatencyModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"))
}

fn route(id: &str) -> Route {
    load_route_file(fixture_dir().join(format!("{id}.json"))).unwrap()
}

fn landmarks() -> Vec<Landmark> {
    load_landmarks_file(fixture_dir().join("landmarks.json")).unwrap()
}

#[test]
fn noiseless_walkers_follow_every_route_exactly() {
    let db = landmarks();
    for id in ["r1", "r2", "r3"] {
        let r = route(id);
        for c in Condition::ALL {
            let out = run_sim(&r, &db, c, &AgentConfig::ideal(7), 10.0).unwrap();
            let rec = &out.record;
            assert!(rec.completed, "{id} {c}: {:?}", rec.note);
            assert_eq!(rec.deviation_count, 0, "{id} {c}");
            let rel = (rec.distance_walked_m - r.length_m()).abs() / r.length_m();
            assert!(rel <= 0.005, "{id} {c}: walked {:.1} of {:.1}", rec.distance_walked_m, r.length_m());
        }
    }
}

#[test]
fn more_comprehension_error_never_means_fewer_deviations() {
    let r = route("r1");
    let db = landmarks();
    for c in [Condition::GMaps, Condition::AiOnly] {
        let means: Vec<f64> = [0.0, 0.1, 0.2, 0.3]
            .into_iter()
            .map(|base| {
                let total: usize = (1..=25u64)
                    .map(|seed| {
                        let agent = AgentConfig { comprehension_error_base: base, seed, ..AgentConfig::default() };
                        run_sim(&r, &db, c, &agent, 10.0).unwrap().record.deviation_count
                    })
                    .sum();
                total as f64 / 25.0
            })
            .collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "{c}: {means:?}");
        assert!(means[3] > means[0], "{c}: {means:?}");
    }
}

#[test]
fn active_beacon_keeps_choices_on_the_waypoint() {
    let r = route("r1");
    let db = landmarks();
    let (mut guided, mut aligned) = (0usize, 0usize);
    for seed in 1..=40u64 {
        let out = run_sim(&r, &db, Condition::AiSa, &AgentConfig { seed, ..AgentConfig::default() }, 10.0).unwrap();
        for d in out.decisions.iter().filter(|d| d.beacon_active) {
            guided += 1;
            aligned += usize::from(signed_delta(d.chosen_bearing, d.waypoint_bearing).abs() <= 25.0);
        }
    }
    assert!(guided >= 20, "too few beacon-guided decisions: {guided}");
    let rate = aligned as f64 / guided as f64;
    assert!(rate >= 0.95, "{aligned}/{guided} = {rate:.3}");
}

#[test]
fn beacon_is_the_only_difference_between_ai_conditions() {
    let r = route("r2");
    let db = landmarks();
    let agent = AgentConfig { seed: 5, ..AgentConfig::default() };
    let only = run_sim(&r, &db, Condition::AiOnly, &agent, 10.0).unwrap();
    let sa = run_sim(&r, &db, Condition::AiSa, &agent, 10.0).unwrap();
    assert!(!log_to_string(&only.log).contains("\"beacon_on\""));
    assert!(log_to_string(&sa.log).contains("\"beacon_on\""));
    assert!(only.decisions.iter().all(|d| !d.beacon_active));
}

#[test]
fn latency_draws_never_leave_their_bounds() {
    let m = LatencyModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1_000_000 {
        let x = m.sample(&mut rng);
        assert!((m.min_s..=m.max_s).contains(&x), "{x}");
    }
}
