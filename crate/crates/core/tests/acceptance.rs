//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Runs as a plain binary (`harness = false`) so criteria execute one
//! at a time and their wall-clock budgets are not skewed by parallel tests.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nav_core::beacon::{render_azimuth, step_beacon};
use nav_core::engine::{replay_tracker, Condition};
use nav_core::instructor::{
    contains_cardinal, load_landmarks_file, synthesize_mock, validate_side, InstructionResult, LandmarkSide, SideCheck,
    SystemInstruction,
};
use nav_core::metrics::log_to_string;
use nav_core::prompting::build_packet;
use nav_core::route::{load_route_file, route_metrics, Route};
use nav_core::simkit::{reaction_distance, run_sim, sim_engine_config, AgentConfig, LatencyModel};
use nav_core::tracking::{replay, PoseSample, TrackerConfig, TrackerState};
use nav_core::{AngleDelta, BeaconConfig, BeaconState, HeadingDeg, LocalXY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn route(id: &str) -> Route {
    load_route_file(fixtures().join(format!("{id}.json"))).expect("fixture route loads")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got:.4}, want {want} ± {tol}"))
}

// --- route complexity ---------------------------------------------------------

struct Expected {
    id: &'static str,
    distance_m: f64,
    intersections: usize,
    turns: usize,
    alt: (f64, f64),
    angle: (f64, f64),
}

const TABLE: [Expected; 3] = [
    Expected { id: "r1", distance_m: 650.0, intersections: 9, turns: 8, alt: (2.78, 0.83), angle: (67.28, 28.95) },
    Expected { id: "r2", distance_m: 550.0, intersections: 10, turns: 9, alt: (2.5, 0.53), angle: (64.97, 23.05) },
    Expected { id: "r3", distance_m: 600.0, intersections: 10, turns: 10, alt: (2.4, 0.70), angle: (80.65, 12.76) },
];

fn route_table() -> Verdict {
    for e in &TABLE {
        let r = route(e.id);
        let m = route_metrics(&r, &r.graph).map_err(|err| format!("{}: {err}", e.id))?;
        let id = e.id;
        within(&format!("{id} distance"), m.distance_m, e.distance_m, 1.0)?;
        ensure(m.n_intersections == e.intersections, || format!("{id} intersections = {}", m.n_intersections))?;
        ensure(m.n_turns == e.turns, || format!("{id} turns = {}", m.n_turns))?;
        within(&format!("{id} mean alternatives"), m.mean_alt_paths, e.alt.0, 0.01)?;
        within(&format!("{id} sd alternatives"), m.sd_alt_paths, e.alt.1, 0.01)?;
        within(&format!("{id} mean turn angle"), m.mean_turn_angle_deg, e.angle.0, 0.01)?;
        within(&format!("{id} sd turn angle"), m.sd_turn_angle_deg, e.angle.1, 0.01)?;
    }
    Ok("r1/r2/r3 distance, intersections, turns, alternatives and angles match".into())
}

// --- beacon ---------------------------------------------------------------------

fn beacon_thresholds() -> Verdict {
    let cfg = BeaconConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeac0);
    let (mut steps, mut activations, mut deactivations) = (0usize, 0usize, 0usize);
    let mut worst_power = 0.0f64;
    let mut worst_mirror = 0.0f64;
    for _ in 0..10_000 {
        let mut st = BeaconState::default();
        let len = rng.random_range(1..=30);
        for _ in 0..len {
            // half the draws land within 5° of the threshold, where mistakes would show
            let d = if rng.random_bool(0.5) {
                let mag = 25.0 + rng.random_range(-5.0..5.0);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            } else {
                rng.random_range(-180.0..180.0)
            };
            let delta = AngleDelta::new(d);
            let next = step_beacon(&st, delta, &cfg);
            // on iff |delta| > 25 from off, off iff |delta| <= 25 from on: both reduce to this
            let want = delta.abs() > 25.0;
            ensure(next.active == want, || {
                format!("delta {d:.3} from active={} gave active={}", st.active, next.active)
            })?;
            activations += usize::from(!st.active && next.active);
            deactivations += usize::from(st.active && !next.active);
            if next.active {
                let r = next.render;
                worst_power = worst_power.max((r.power() - 1.0).abs());
                let m = render_azimuth(AngleDelta::new(-d), &cfg);
                worst_mirror = worst_mirror
                    .max((r.gain_left - m.gain_right).abs())
                    .max((r.gain_right - m.gain_left).abs())
                    .max((r.itd_s + m.itd_s).abs());
            }
            st = next;
            steps += 1;
        }
    }
    ensure(worst_power <= 1e-9, || format!("power off by {worst_power:e}"))?;
    ensure(worst_mirror <= 1e-9, || format!("mirror asymmetry {worst_mirror:e}"))?;
    ensure(activations > 0 && deactivations > 0, || "sequences never toggled the cue".into())?;
    Ok(format!(
        "{steps} steps, {activations} activations, {deactivations} deactivations; power err {worst_power:.1e}, mirror err {worst_mirror:.1e}"
    ))
}

// --- deviation counting -----------------------------------------------------------

/// Walks the first 60 m of r1's opening step at 0.25 m per fix, pushed sideways by
/// `offset(along)` metres.
fn first_leg_trace(r: &Route, offset: impl Fn(f64) -> f64) -> Vec<PoseSample> {
    let a = r.to_local(r.steps[0].start);
    let b = r.to_local(r.steps[0].end);
    let dir = b - a;
    let unit = dir * (1.0 / dir.norm());
    let normal = LocalXY::new(unit.north_m, -unit.east_m);
    let heading = dir.heading();
    (0..=240)
        .map(|i| {
            let s = f64::from(i) * 0.25;
            PoseSample {
                t: f64::from(i) * 0.2,
                pos: r.from_local(a + unit * s + normal * offset(s)),
                heading,
                speed_mps: 1.25,
            }
        })
        .collect()
}

fn bump(depth: f64, spans: &'static [(f64, f64)]) -> impl Fn(f64) -> f64 {
    move |s| if spans.iter().any(|&(lo, hi)| (lo..=hi).contains(&s)) { depth } else { 0.0 }
}

fn deviation_counting() -> Verdict {
    let r = route("r1");
    let cfg = TrackerConfig::default();
    let cases: [(&str, Vec<PoseSample>, usize); 3] = [
        ("9 m", first_leg_trace(&r, bump(9.0, &[(15.0, 40.0)])), 0),
        ("12 m", first_leg_trace(&r, bump(12.0, &[(15.0, 40.0)])), 1),
        ("double 12 m", first_leg_trace(&r, bump(12.0, &[(8.0, 22.0), (36.0, 50.0)])), 2),
    ];
    ensure(r.steps[0].distance_m > 70.0, || "r1 opening step is shorter than the traces".into())?;
    let mut counts = Vec::new();
    for (name, trace, want) in &cases {
        let mut st = replay(trace, &r, &cfg).map_err(|e| e.to_string())?;
        st.finish();
        ensure(st.deviation_count == *want, || format!("{name} excursion gave {} deviations", st.deviation_count))?;
        counts.push(st.deviation_count.to_string());
    }

    let tracker_cfg = sim_engine_config().tracker;
    let mut replays = 0;
    for (id, condition, seed) in
        [("r1", Condition::AiOnly, 3), ("r2", Condition::GMaps, 8), ("r3", Condition::AiSa, 21)]
    {
        let rt = route(id);
        let out = run_sim(&rt, &[], condition, &AgentConfig { seed, ..AgentConfig::default() }, 10.0)
            .map_err(|e| e.to_string())?;
        let again: TrackerState = replay_tracker(&out.log, &rt, &tracker_cfg).map_err(|e| e.to_string())?;
        let (a, b) = (serde_json::to_string(&out.tracker).unwrap(), serde_json::to_string(&again).unwrap());
        ensure(a == b && out.tracker == again, || format!("{id} {condition} seed {seed}: replayed tracker differs"))?;
        replays += 1;
    }
    Ok(format!(
        "traces gave {} deviations; {replays} simulation logs replay to identical tracker state",
        counts.join("/")
    ))
}

// --- latency ------------------------------------------------------------------------

fn latency_model() -> Verdict {
    let model = LatencyModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a7e);
    let xs: Vec<f64> = (0..100_000).map(|_| model.sample(&mut rng)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    within("mean", mean, 3.31, 0.05)?;
    within("sd", sd, 0.81, 0.1)?;
    ensure(lo >= 1.48 && hi <= 11.29, || format!("support [{lo:.3}, {hi:.3}] leaves [1.48, 11.29]"))?;
    Ok(format!("mean {mean:.3} s, sd {sd:.3} s, range [{lo:.2}, {hi:.2}]"))
}

// --- instruction rules ---------------------------------------------------------------

fn leads_with_turn_guidance(text: &str) -> bool {
    text.starts_with("Turn ") || text.starts_with("Continue ")
}

fn flip_side(r: &InstructionResult) -> InstructionResult {
    let (side, from, to) = match r.landmark_side {
        Some(LandmarkSide::Left) => (LandmarkSide::Right, "your left", "your right"),
        _ => (LandmarkSide::Left, "your right", "your left"),
    };
    InstructionResult { utterance: r.utterance.replace(from, to), landmark_side: Some(side), ..r.clone() }
}

fn instruction_rules() -> Verdict {
    let db = load_landmarks_file(fixtures().join("landmarks.json")).map_err(|e| e.to_string())?;
    let routes = [route("r1"), route("r2"), route("r3")];
    let cfg = SystemInstruction::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1257);
    let (mut far, mut with_landmark, mut injected, mut corrected) = (0, 0, 0, 0);
    for i in 0..500 {
        let r = &routes[i % routes.len()];
        let k = rng.random_range(0..r.steps.len());
        let step = &r.steps[k];
        let (a, b) = (r.to_local(step.start), r.to_local(step.end));
        let dir = b - a;
        let unit = dir * (1.0 / dir.norm());
        let normal = LocalXY::new(unit.north_m, -unit.east_m);
        // anywhere from the turn point to 120 m back along the step's line, a few metres off it
        let back = rng.random_range(0.0..120.0);
        let pos = r.from_local(b - unit * back + normal * rng.random_range(-4.0..4.0));
        let heading = HeadingDeg::new(dir.heading().value() + rng.random_range(-90.0..90.0));
        let sample = PoseSample { t: f64::from(i as u32), pos, heading, speed_mps: 1.3 };
        let mut tracker = TrackerState::new();
        tracker.current_waypoint_index = k;
        let packet = build_packet(&sample, &tracker, r, "").map_err(|e| e.to_string())?;
        let out = synthesize_mock(&packet, &db, &cfg);
        let text = &out.utterance;
        ensure(leads_with_turn_guidance(text), || format!("{:?} does not lead with turn guidance", text))?;
        ensure(!contains_cardinal(text), || format!("{:?} names a compass direction", text))?;
        let is_far = packet.dist_to_turn_m > 60.0;
        ensure(text.starts_with("Continue forward") == is_far, || {
            format!("{text:?} at {:.1} m breaks the continue-forward rule", packet.dist_to_turn_m)
        })?;
        far += usize::from(is_far);
        if let Some(LandmarkSide::Left | LandmarkSide::Right) = out.landmark_side {
            with_landmark += 1;
            ensure(validate_side(&out) == SideCheck::Consistent, || format!("{text:?} flagged as inconsistent"))?;
            injected += 1;
            if validate_side(&flip_side(&out)) == SideCheck::Corrected(out.clone()) {
                corrected += 1;
            }
        }
    }
    ensure(far > 0 && with_landmark > 0, || {
        format!("packet mix too narrow: {far} far, {with_landmark} with landmark")
    })?;
    ensure(corrected == injected, || format!("corrected {corrected} of {injected} injected reversals"))?;
    Ok(format!(
        "500 packets ({far} far, {with_landmark} naming a landmark); {corrected}/{injected} reversals corrected"
    ))
}

// --- directional result ----------------------------------------------------------------

fn directional() -> Verdict {
    let r = route("r1");
    let db = load_landmarks_file(fixtures().join("landmarks.json")).map_err(|e| e.to_string())?;
    let mut devs = [[0usize; 100]; 3];
    let mut dead_end = [0usize; 3];
    for (ci, c) in Condition::ALL.into_iter().enumerate() {
        for seed in 1..=100u64 {
            let out = run_sim(&r, &db, c, &AgentConfig { seed, ..AgentConfig::default() }, 10.0)
                .map_err(|e| format!("{c} seed {seed}: {e}"))?;
            devs[ci][seed as usize - 1] = out.record.deviation_count;
            dead_end[ci] += out.record.dead_end_deviations;
        }
    }
    let [gmaps, ai_only, ai_sa] = devs;
    let mean = |v: &[usize; 100]| v.iter().sum::<usize>() as f64 / 100.0;
    let wins = |other: &[usize; 100]| ai_sa.iter().zip(other).filter(|(a, o)| a < o).count();
    let (vs_gmaps, vs_ai_only) = (wins(&gmaps), wins(&ai_only));
    let summary = format!(
        "mean deviations gmaps {:.2}, ai-only {:.2}, ai-sa {:.2}; ai-sa fewer on {vs_gmaps}/100 vs gmaps, {vs_ai_only}/100 vs ai-only; dead-end deviations ai-only {}, gmaps {}, ai-sa {}",
        mean(&gmaps),
        mean(&ai_only),
        mean(&ai_sa),
        dead_end[1],
        dead_end[0],
        dead_end[2]
    );
    ensure(mean(&ai_sa) < mean(&gmaps) && mean(&ai_sa) < mean(&ai_only), || summary.clone())?;
    ensure(vs_gmaps >= 80 && vs_ai_only >= 80, || summary.clone())?;
    ensure(dead_end[1] > dead_end[0] && dead_end[0] > dead_end[2], || summary.clone())?;
    Ok(summary)
}

// --- determinism ---------------------------------------------------------------------

fn determinism() -> Verdict {
    let r = route("r2");
    let db = load_landmarks_file(fixtures().join("landmarks.json")).map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for c in Condition::ALL {
        let agent = AgentConfig { seed: 42, ..AgentConfig::default() };
        let a = run_sim(&r, &db, c, &agent, 10.0).map_err(|e| e.to_string())?;
        let b = run_sim(&r, &db, c, &agent, 10.0).map_err(|e| e.to_string())?;
        let (la, lb) = (log_to_string(&a.log), log_to_string(&b.log));
        ensure(la == lb, || format!("{c}: event logs differ"))?;
        ensure(a.record.to_json() == b.record.to_json(), || format!("{c}: run records differ"))?;
        bytes += la.len();
    }
    Ok(format!("three conditions, {bytes} log bytes identical across runs"))
}

// --- reaction distance -----------------------------------------------------------------

fn reaction() -> Verdict {
    let d = reaction_distance(1.38, 3.31);
    within("reaction distance", d, 4.57, 0.01)?;
    Ok(format!("{d:.4} m"))
}

fn main() -> ExitCode {
    type Check = fn() -> Verdict;
    let criteria: [(&str, Option<Duration>, Check); 8] = [
        ("route complexity table", Some(Duration::from_secs(1)), route_table),
        ("beacon threshold suite", Some(Duration::from_secs(1)), beacon_thresholds),
        ("deviation counting", Some(Duration::from_secs(1)), deviation_counting),
        ("latency model", Some(Duration::from_secs(1)), latency_model),
        ("instruction rules", None, instruction_rules),
        ("directional simulation result", Some(Duration::from_secs(60)), directional),
        ("determinism", None, determinism),
        ("reaction distance", None, reaction),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let took = start.elapsed();
        let verdict = match (verdict, budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.2?}, budget {b:?}")),
            (v, _) => v,
        };
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", 8 - failed, 8);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
