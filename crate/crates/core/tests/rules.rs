//! Rule evaluators on small hand-built windows.

use std::collections::HashSet;
use std::sync::Arc;

use vekg::geometry::{BoundingBox, Region};
use vekg::ingest::{FrameDetections, ObjectNode};
use vekg::rules::{
    register_rules, AttributeParams, EventRule, FallParams, JaywalkParams, MatchNotification, ParkingParams, PoseParams,
    RideParams, RuleKind, RuleParams, RuleSet, TrafficParams,
};
use vekg::synth::skeleton;
use vekg::tag::{aggregate, VekgTag};
use vekg::vekg::build_frame_graph;
use vekg::windowing::WindowState;
use vekg::Execution;

const DT: i64 = 33;

/// One window over `frames`, with the relations `rule` needs.
fn tag_for(rule: &EventRule, frames: &[FrameDetections]) -> VekgTag {
    let rels = rule.required_relations();
    let graphs = frames.iter().map(|f| Arc::new(build_frame_graph(f, &rels))).collect();
    let end = frames.last().map_or(1, |f| f.timestamp + 1);
    aggregate(&WindowState { index: 0, start: 0, end, graphs }, &rels, Execution::Sequential).unwrap()
}

fn frames(n: usize, objects: impl Fn(usize) -> Vec<ObjectNode>) -> Vec<FrameDetections> {
    (0..n).map(|i| FrameDetections::new(i as u64, i as i64 * DT, objects(i))).collect()
}

fn rule(kind: RuleKind, params: RuleParams) -> EventRule {
    EventRule::new("r", kind, 60_000, params).unwrap()
}

fn eval(rule: &EventRule, frames: &[FrameDetections]) -> Vec<MatchNotification> {
    rule.evaluate(&tag_for(rule, frames))
}

/// Box with the given centroid and size.
fn centred(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}

// --- fall ---

fn fall() -> EventRule {
    rule(RuleKind::FallDetection, RuleParams::Fall(FallParams::default()))
}

#[test]
fn fall_ratio_jump_then_still_fires_once_at_the_changepoint() {
    let f = frames(60, |i| {
        let (w, h) = if i < 30 { (40.0, 100.0) } else { (90.0, 50.0) };
        vec![ObjectNode::new(1, "person", centred(300.0, 300.0, w, h))]
    });
    let n = eval(&fall(), &f);
    assert_eq!(n.len(), 1, "{n:?}");
    assert_eq!(n[0].participants, vec![1]);
    assert_eq!(n[0].evidence["changepoint_frame"], 30.0);
    assert_eq!(n[0].interval.start, 30 * DT);
    assert!((n[0].evidence["ratio_jump"] - 1.4).abs() < 1e-9);
}

#[test]
fn fall_needs_a_changepoint() {
    let f = frames(60, |i| vec![ObjectNode::new(1, "person", centred(100.0 + 8.0 * i as f64, 300.0, 40.0, 100.0))]);
    assert!(eval(&fall(), &f).is_empty());
}

#[test]
fn fall_needs_stillness() {
    let f = frames(60, |i| {
        let (w, h) = if i < 30 { (40.0, 100.0) } else { (90.0, 50.0) };
        vec![ObjectNode::new(1, "person", centred(100.0 + 15.0 * i as f64, 300.0, w, h))]
    });
    assert!(eval(&fall(), &f).is_empty());
}

#[test]
fn fall_ignores_other_labels() {
    let f = frames(60, |i| {
        let (w, h) = if i < 30 { (40.0, 100.0) } else { (90.0, 50.0) };
        vec![ObjectNode::new(1, "dog", centred(300.0, 300.0, w, h))]
    });
    assert!(eval(&fall(), &f).is_empty());
}

// --- rides ---

fn ride(kind: RuleKind) -> EventRule {
    rule(kind, RuleParams::Ride(RideParams::default()))
}

fn rider_and_mount(mount: &str, speed: f64, rider_dx: f64, rider_dy: f64) -> Vec<FrameDetections> {
    frames(40, |i| {
        let x = 100.0 + speed * i as f64;
        vec![
            ObjectNode::new(1, "person", BoundingBox::new(x + rider_dx, 300.0 + rider_dy, 50.0, 110.0)),
            ObjectNode::new(2, mount, BoundingBox::new(x, 390.0, 100.0, 60.0)),
        ]
    })
}

#[test]
fn bike_ride_atop_and_moving() {
    let n = eval(&ride(RuleKind::BikeRide), &rider_and_mount("bike", 6.0, 25.0, 0.0));
    assert_eq!(n.len(), 1, "{n:?}");
    assert_eq!(n[0].participants, vec![1, 2]);
    assert_eq!((n[0].interval.start, n[0].interval.end), (0, 39 * DT + 1));
}

#[test]
fn bike_ride_needs_motion() {
    assert!(eval(&ride(RuleKind::BikeRide), &rider_and_mount("bike", 0.0, 25.0, 0.0)).is_empty());
}

#[test]
fn horse_ride_beside_is_not_a_ride() {
    // Overlapping the horse's left edge, centroids level: Left, not Above.
    assert!(eval(&ride(RuleKind::HorseRide), &rider_and_mount("horse", 6.0, -40.0, 60.0)).is_empty());
}

#[test]
fn horse_rule_ignores_bikes() {
    assert!(eval(&ride(RuleKind::HorseRide), &rider_and_mount("bike", 6.0, 25.0, 0.0)).is_empty());
}

// --- pose ---

fn pose_rule(kind: RuleKind) -> EventRule {
    rule(kind, RuleParams::Pose(PoseParams { epsilon_deg: Some(1.0), epsilon_px: Some(1.5), ..PoseParams::default() }))
}

/// Right-arm angle script in degrees: flat, ramp up, hold, ramp down, flat.
fn arm_script(i: usize, peak: f64) -> f64 {
    let (rise, hold, fall) = (20usize, 30usize, 50usize);
    match i {
        _ if i < rise => 5.0,
        _ if i < hold => 5.0 + (peak - 5.0) * (i - rise) as f64 / (hold - rise) as f64,
        _ if i < hold + 5 => peak,
        _ if i < fall + 5 => peak - (peak - 5.0) * (i - hold - 5) as f64 / (fall - hold) as f64,
        _ => 5.0,
    }
}

fn person_pair(gap: f64, arm_a: impl Fn(usize) -> f64, arm_b: impl Fn(usize) -> f64) -> Vec<FrameDetections> {
    frames(80, |i| {
        let a = BoundingBox::new(400.0, 250.0, 80.0, 200.0);
        let b = BoundingBox::new(400.0 + gap, 250.0, 80.0, 200.0);
        vec![
            ObjectNode::new(1, "person", a).with_keypoints(skeleton(&a, 1.0, arm_a(i), 5.0)),
            ObjectNode::new(2, "person", b).with_keypoints(skeleton(&b, -1.0, arm_b(i), 5.0)),
        ]
    })
}

#[test]
fn handshake_two_phases() {
    let f = person_pair(215.0, |i| arm_script(i, 60.0), |i| arm_script(i, 60.0));
    let n = eval(&pose_rule(RuleKind::Handshake), &f);
    assert_eq!(n.len(), 1, "{n:?}");
    assert_eq!(n[0].participants, vec![1, 2]);
}

#[test]
fn handshake_idle_pair() {
    assert!(eval(&pose_rule(RuleKind::Handshake), &person_pair(215.0, |_| 5.0, |_| 5.0)).is_empty());
}

#[test]
fn handshake_phase_one_only() {
    let raise = |i: usize| arm_script(i.min(30), 60.0);
    assert!(eval(&pose_rule(RuleKind::Handshake), &person_pair(215.0, raise, raise)).is_empty());
}

#[test]
fn punch_orders_attacker_first() {
    // Victim shoulder sits 5 px past the attacker's horizontal reach.
    let f = person_pair(137.0, |_| 5.0, |i| arm_script(i, 90.0));
    let n = eval(&pose_rule(RuleKind::Punch), &f);
    assert_eq!(n.len(), 1, "{n:?}");
    assert_eq!(n[0].participants, vec![2, 1]);
}

#[test]
fn punch_rule_on_a_handshake() {
    let f = person_pair(215.0, |i| arm_script(i, 60.0), |i| arm_script(i, 60.0));
    assert!(eval(&pose_rule(RuleKind::Punch), &f).is_empty());
}

#[test]
fn punch_needs_two_people() {
    let f = frames(80, |i| {
        let a = BoundingBox::new(400.0, 250.0, 80.0, 200.0);
        vec![ObjectNode::new(1, "person", a).with_keypoints(skeleton(&a, 1.0, arm_script(i, 90.0), 5.0))]
    });
    assert!(eval(&pose_rule(RuleKind::Punch), &f).is_empty());
}

// --- traffic ---

fn traffic() -> EventRule {
    let region = Region::rect(0.0, 0.0, 1000.0, 200.0).unwrap();
    rule(RuleKind::HighVolumeTraffic, RuleParams::Traffic(TrafficParams { region, threshold: 5.0 }))
}

fn cars_in_region(count: impl Fn(usize) -> usize) -> Vec<FrameDetections> {
    frames(10, |i| {
        let mut objs: Vec<_> =
            (0..count(i)).map(|k| ObjectNode::new(k as u64, "car", BoundingBox::new(20.0 + 110.0 * k as f64, 50.0, 100.0, 50.0))).collect();
        // Outside the region; never counted.
        objs.push(ObjectNode::new(99, "car", BoundingBox::new(20.0, 400.0, 100.0, 50.0)));
        objs
    })
}

#[test]
fn traffic_six_cars_fires_over_the_window() {
    let n = eval(&traffic(), &cars_in_region(|_| 6));
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].evidence["mean_count"], 6.0);
    assert_eq!((n[0].interval.start, n[0].interval.end), (0, 9 * DT + 1));
    assert!(!n[0].participants.contains(&99));
}

#[test]
fn traffic_three_cars_is_quiet() {
    assert!(eval(&traffic(), &cars_in_region(|_| 3)).is_empty());
}

#[test]
fn traffic_uses_the_mean_count() {
    let n = eval(&traffic(), &cars_in_region(|i| if i % 2 == 0 { 4 } else { 8 }));
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].evidence["mean_count"], 6.0);
}

// --- parking ---

fn parking(slots: Vec<BoundingBox>) -> EventRule {
    rule(RuleKind::ParkingSlotStatus, RuleParams::Parking(ParkingParams { slots, ratio: 0.5, max_gap_frames: 3, min_frames: 1 }))
}

#[test]
fn parking_car_covering_most_of_a_slot() {
    let slot = BoundingBox::new(100.0, 100.0, 100.0, 50.0);
    // Covers 80 of the slot's 100 px width at full height.
    let f = frames(10, |_| vec![ObjectNode::new(4, "car", BoundingBox::new(120.0, 100.0, 100.0, 50.0))]);
    let n = eval(&parking(vec![slot]), &f);
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].participants, vec![4]);
    assert!((n[0].evidence["mean_overlap_ratio"] - 0.8).abs() < 1e-12);
    assert_eq!(n[0].evidence["slot_occupancy"], 1.0);
}

#[test]
fn parking_empty_slot() {
    let f = frames(10, |_| vec![ObjectNode::new(4, "car", BoundingBox::new(500.0, 500.0, 100.0, 50.0))]);
    assert!(eval(&parking(vec![BoundingBox::new(100.0, 100.0, 100.0, 50.0)]), &f).is_empty());
}

#[test]
fn parking_straddling_car_occupies_one_slot() {
    let slots = vec![BoundingBox::new(0.0, 0.0, 100.0, 50.0), BoundingBox::new(100.0, 0.0, 100.0, 50.0)];
    // 60 px over the first slot, 30 px over the second.
    let f = frames(10, |_| vec![ObjectNode::new(4, "car", BoundingBox::new(40.0, 0.0, 90.0, 50.0))]);
    let n = eval(&parking(slots), &f);
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].evidence["slot"], 0.0);
}

// --- jaywalking ---

fn jaywalk() -> EventRule {
    let region = Region::rect(0.0, 300.0, 1280.0, 160.0).unwrap();
    rule(RuleKind::Jaywalking, RuleParams::Jaywalk(JaywalkParams { region, max_gap_frames: 3, min_frames: 3 }))
}

#[test]
fn jaywalk_crossing_for_twelve_frames() {
    // Centroid enters the band at frame 10 and leaves after frame 21.
    let f = frames(32, |i| {
        let cy = if (10..22).contains(&i) { 380.0 } else if i < 10 { 250.0 } else { 520.0 };
        vec![ObjectNode::new(1, "person", centred(600.0, cy, 40.0, 100.0))]
    });
    let n = eval(&jaywalk(), &f);
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].evidence["frames"], 12.0);
    assert_eq!((n[0].interval.start, n[0].interval.end), (10 * DT, 21 * DT + 1));
}

#[test]
fn jaywalk_skirting_the_kerb() {
    let f = frames(30, |i| vec![ObjectNode::new(1, "person", centred(100.0 + 10.0 * i as f64, 280.0, 40.0, 100.0))]);
    assert!(eval(&jaywalk(), &f).is_empty());
}

#[test]
fn jaywalk_ignores_cars() {
    let f = frames(30, |i| vec![ObjectNode::new(1, "car", centred(100.0 + 10.0 * i as f64, 380.0, 120.0, 60.0))]);
    assert!(eval(&jaywalk(), &f).is_empty());
}

// --- attributes ---

fn attribute() -> EventRule {
    rule(RuleKind::AttributeQuery, RuleParams::Attribute(AttributeParams { key: "color".into(), value: "red".into() }))
}

#[test]
fn attribute_first_appearance_only() {
    let r = attribute();
    let car = |c: &str| ObjectNode::new(3, "car", BoundingBox::new(0.0, 0.0, 10.0, 10.0)).with_attribute("color", c);
    let mut seen = HashSet::new();
    let n0 = r.evaluate_frame(&FrameDetections::new(0, 0, vec![car("RED")]), &mut seen);
    let n1 = r.evaluate_frame(&FrameDetections::new(1, 33, vec![car("red")]), &mut seen);
    assert_eq!(n0.len(), 1);
    assert_eq!((n0[0].interval.start, n0[0].interval.end), (0, 1));
    assert!(n1.is_empty());
}

#[test]
fn attribute_value_and_label_must_match() {
    let r = attribute();
    let mut seen = HashSet::new();
    let blue = ObjectNode::new(1, "car", BoundingBox::new(0.0, 0.0, 10.0, 10.0)).with_attribute("color", "blue");
    let red_person = ObjectNode::new(2, "person", BoundingBox::new(0.0, 0.0, 10.0, 10.0)).with_attribute("color", "red");
    assert!(r.evaluate_frame(&FrameDetections::new(0, 0, vec![blue, red_person]), &mut seen).is_empty());
}

// --- registry ---

#[test]
fn empty_registry_matches_nothing() {
    let rules = RuleSet::default();
    let f = cars_in_region(|_| 6);
    assert!(rules.evaluate_tag(&[], &tag_for(&traffic(), &f), Execution::Parallel).is_empty());
}

#[test]
fn traffic_and_jaywalk_interleave_by_start() {
    let t = EventRule { id: "a-traffic".into(), ..traffic() };
    let j = EventRule { id: "b-jaywalk".into(), ..jaywalk() };
    let rules = register_rules([j, t]).unwrap();
    let f = frames(40, |i| {
        let mut objs: Vec<_> = (0..6).map(|k| ObjectNode::new(k, "car", BoundingBox::new(20.0 + 110.0 * k as f64, 50.0, 100.0, 50.0))).collect();
        if (5..15).contains(&i) {
            objs.push(ObjectNode::new(50, "person", centred(600.0, 380.0, 40.0, 100.0)));
        }
        objs
    });
    let rels = rules.all_required_relations();
    let graphs = f.iter().map(|x| Arc::new(build_frame_graph(x, &rels))).collect();
    let tag = aggregate(&WindowState { index: 0, start: 0, end: 40 * DT, graphs }, &rels, Execution::Parallel).unwrap();
    let n = rules.evaluate_tag(&[0, 1], &tag, Execution::Parallel);
    let kinds: Vec<_> = n.iter().map(|n| (n.interval.start, n.kind)).collect();
    assert_eq!(kinds, vec![(0, RuleKind::HighVolumeTraffic), (5 * DT, RuleKind::Jaywalking)]);
}
