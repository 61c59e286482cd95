//! Reply-format and system-instruction golden files. Set `UPDATE_GOLDEN=1` to rewrite.

use std::path::PathBuf;

use nav_core::fixtures::{gen_landmark_db, replica_route};
use nav_core::geo::signed_delta;
use nav_core::instructor::{
    baseline_instruction, format_reply, parse_reply, synthesize_mock, LandmarkSide, SystemInstruction,
};
use nav_core::prompting::ContextPacket;
use nav_core::route::Route;
use nav_core::{HeadingDeg, LocalXY};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden {name} differs");
}

/// Walker `back_m` before waypoint `k`, heading `turn_deg` away from the leg bearing.
fn packet(route: &Route, k: usize, back_m: f64, turn_deg: f64) -> ContextPacket {
    let step = route.steps[k].clone();
    let (a, b) = (route.to_local(step.start), route.to_local(step.end));
    let leg = (b - a).heading();
    let pos = b + LocalXY::along(leg, -back_m);
    let heading: HeadingDeg = leg.offset(turn_deg);
    ContextPacket {
        image_ref: format!("frames/{}-{k}.jpg", route.id),
        pos: route.from_local(pos),
        heading,
        delta_to_turn: signed_delta(heading, (b - pos).heading()),
        dist_to_turn_m: back_m,
        step,
        waypoint_index: k,
    }
}

#[test]
fn mock_replies_match_golden() {
    let r1 = replica_route("r1").unwrap();
    let db = gen_landmark_db();
    let cfg = SystemInstruction::default();
    let cases = [
        ("mock_r1_wp1_near.txt", packet(&r1, 1, 20.0, 0.0)),
        ("mock_r1_wp4_dead_end.txt", packet(&r1, 4, 15.0, 0.0)),
        ("mock_r1_wp2_far.txt", packet(&r1, 2, 55.0 + 10.0, 0.0)),
        ("mock_r1_wp3_misaligned.txt", packet(&r1, 3, 25.0, 70.0)),
    ];
    for (name, p) in cases {
        golden(name, &format_reply(&synthesize_mock(&p, &db, &cfg)));
    }
    golden("baseline_r1_wp0.txt", &(baseline_instruction(&packet(&r1, 0, 70.0, 0.0)).utterance + "\n"));
}

#[test]
fn formatted_replies_parse_back() {
    let r1 = replica_route("r1").unwrap();
    let db = gen_landmark_db();
    let cfg = SystemInstruction::default();
    for k in 0..r1.steps.len() {
        let res = synthesize_mock(&packet(&r1, k, 20.0, 0.0), &db, &cfg);
        let back = parse_reply(&format_reply(&res)).unwrap();
        assert_eq!(back.utterance, res.utterance);
        assert_eq!(back.landmark, res.landmark.as_ref().map(|l| l.name.clone()));
        assert_eq!(back.side, res.landmark_side);
    }
}

#[test]
fn chatty_model_reply_parses() {
    let text =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/model_reply_chatty.txt")).unwrap();
    let r = parse_reply(&text).unwrap();
    assert_eq!(r.utterance, "Turn left at the fountain on your left.");
    assert_eq!(r.landmark.as_deref(), Some("fountain"));
    assert_eq!(r.side, Some(LandmarkSide::Left));
    let b = r.bbox.unwrap();
    assert!((b.center_x() - 0.25).abs() < 1e-12);
}

#[test]
fn system_instruction_matches_golden() {
    golden("system_instruction.txt", &SystemInstruction::default().render());
}
