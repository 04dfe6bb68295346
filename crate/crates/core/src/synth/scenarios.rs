//! Built-in scenarios: a positive and at least one negative per rule kind,
//! plus the street scenes used for reduction and search measurements.
//!
//! Truth intervals are derived from the scripts by hand; comments give the
//! arithmetic.

use std::collections::BTreeMap;

use super::{Actor, ArmKey, BoxKey, Noise, PoseScript, Scenario};
use crate::geometry::{BoundingBox, Point, Region};
use crate::metrics::TruthEvent;
use crate::rules::{
    AttributeParams, EventRule, FallParams, JaywalkParams, ParkingParams, PoseParams, RideParams, RuleKind,
    RuleParams, TrafficParams,
};
use crate::temporal::Interval;

const W: u32 = 1280;
const H: u32 = 720;
const WINDOW_MS: i64 = 10_000;

fn actor(track: u64, label: &str, keys: &[(i64, f64, f64, f64, f64)]) -> Actor {
    Actor {
        track,
        label: label.to_string(),
        attrs: BTreeMap::new(),
        keys: keys.iter().map(|&(t, x, y, w, h)| BoxKey::new(t, x, y, w, h)).collect(),
        pose: None,
    }
}

fn posed(mut a: Actor, facing: f64, arms: &[(i64, f64, f64)]) -> Actor {
    a.pose = Some(PoseScript {
        facing,
        arms: arms.iter().map(|&(t_ms, right_deg, left_deg)| ArmKey { t_ms, right_deg, left_deg }).collect(),
    });
    a
}

fn with_attr(mut a: Actor, k: &str, v: &str) -> Actor {
    a.attrs.insert(k.into(), v.into());
    a
}

fn rule(id: &str, kind: RuleKind, params: RuleParams) -> EventRule {
    EventRule::new(id, kind, WINDOW_MS, params).expect("built-in rule is valid")
}

fn truth(kind: RuleKind, start: i64, end: i64, participants: &[u64]) -> TruthEvent {
    TruthEvent { kind, interval: Interval::new(start, end).expect("valid"), participants: participants.to_vec() }
}

fn rect(x: f64, y: f64, w: f64, h: f64) -> Region {
    Region::rect(x, y, w, h).expect("valid rectangle")
}

fn scenario(
    name: &str,
    duration_ms: i64,
    rules: Vec<EventRule>,
    planted_events: Vec<TruthEvent>,
    actors: Vec<Actor>,
) -> Scenario {
    Scenario {
        name: name.to_string(),
        duration_ms,
        fps: 30.0,
        width: W,
        height: H,
        seed: 0,
        noise: Noise::default(),
        positive: !planted_events.is_empty(),
        rules,
        planted_events,
        actors,
    }
}

// --- fall -----------------------------------------------------------------

fn fall_rule() -> EventRule {
    rule("fall", RuleKind::FallDetection, RuleParams::Fall(FallParams::default()))
}

/// Walks right at 13 px/frame (390 px/s) for 3 s, drops from a 40x100 box to
/// a 90x50 box by 3.1 s and lies still until the end.
fn fall_positive() -> Scenario {
    let p = actor(
        1,
        "person",
        &[(0, 40.0, 300.0, 40.0, 100.0), (3000, 1210.0, 300.0, 40.0, 100.0), (3100, 1185.0, 350.0, 90.0, 50.0), (6000, 1185.0, 350.0, 90.0, 50.0)],
    );
    scenario("fall_positive", 6000, vec![fall_rule()], vec![truth(RuleKind::FallDetection, 3000, 6000, &[1])], vec![p])
}

fn fall_negative_walk() -> Scenario {
    let p = actor(
        1,
        "person",
        &[(0, 40.0, 300.0, 40.0, 100.0), (3000, 1210.0, 300.0, 40.0, 100.0), (6000, 40.0, 300.0, 40.0, 100.0)],
    );
    scenario("fall_negative_walk", 6000, vec![fall_rule()], vec![], vec![p])
}

/// Same drop, but the person keeps crawling left at 13 px/frame.
fn fall_negative_moving() -> Scenario {
    let p = actor(
        1,
        "person",
        &[(0, 40.0, 300.0, 40.0, 100.0), (3000, 1210.0, 300.0, 40.0, 100.0), (3100, 1185.0, 350.0, 90.0, 50.0), (6000, 54.0, 350.0, 90.0, 50.0)],
    );
    scenario("fall_negative_moving", 6000, vec![fall_rule()], vec![], vec![p])
}

// --- rides ----------------------------------------------------------------

fn ride_rule(kind: RuleKind) -> EventRule {
    let id = if kind == RuleKind::HorseRide { "horse-ride" } else { "bike-ride" };
    rule(id, kind, RuleParams::Ride(RideParams::default()))
}

/// Rider box 50x110 overlaps the top 20 px of a 150x100 horse; both move
/// right at 5 px/frame for the whole 4 s.
fn horse_ride_positive() -> Scenario {
    let horse = actor(2, "horse", &[(0, 100.0, 400.0, 150.0, 100.0), (4000, 700.0, 400.0, 150.0, 100.0)]);
    let rider = actor(1, "person", &[(0, 150.0, 310.0, 50.0, 110.0), (4000, 750.0, 310.0, 50.0, 110.0)]);
    scenario(
        "horse_ride_positive",
        4000,
        vec![ride_rule(RuleKind::HorseRide)],
        vec![truth(RuleKind::HorseRide, 0, 4000, &[1, 2])],
        vec![rider, horse],
    )
}

/// Person walks alongside, overlapping the horse's left edge: Left, not Above.
fn horse_ride_negative_beside() -> Scenario {
    let horse = actor(2, "horse", &[(0, 100.0, 400.0, 150.0, 100.0), (4000, 700.0, 400.0, 150.0, 100.0)]);
    let walker = actor(1, "person", &[(0, 60.0, 390.0, 50.0, 110.0), (4000, 660.0, 390.0, 50.0, 110.0)]);
    scenario("horse_ride_negative_beside", 4000, vec![ride_rule(RuleKind::HorseRide)], vec![], vec![walker, horse])
}

fn bike_ride_positive() -> Scenario {
    let bike = actor(2, "bike", &[(0, 100.0, 420.0, 100.0, 60.0), (4000, 820.0, 420.0, 100.0, 60.0)]);
    let rider = actor(1, "person", &[(0, 125.0, 330.0, 50.0, 110.0), (4000, 845.0, 330.0, 50.0, 110.0)]);
    scenario(
        "bike_ride_positive",
        4000,
        vec![ride_rule(RuleKind::BikeRide)],
        vec![truth(RuleKind::BikeRide, 0, 4000, &[1, 2])],
        vec![rider, bike],
    )
}

fn bike_ride_negative_stationary() -> Scenario {
    let bike = actor(2, "bike", &[(0, 100.0, 420.0, 100.0, 60.0), (4000, 100.0, 420.0, 100.0, 60.0)]);
    let rider = actor(1, "person", &[(0, 125.0, 330.0, 50.0, 110.0), (4000, 125.0, 330.0, 50.0, 110.0)]);
    scenario("bike_ride_negative_stationary", 4000, vec![ride_rule(RuleKind::BikeRide)], vec![], vec![rider, bike])
}

// --- pose -----------------------------------------------------------------

fn pose_params() -> PoseParams {
    // Explicit deadbands sit well above the slope of 2 px keypoint jitter
    // over a 10-frame window (about 0.35 deg and 0.3 px per frame).
    PoseParams { epsilon_deg: Some(1.0), epsilon_px: Some(1.5), ..PoseParams::default() }
}

fn handshake_rule() -> EventRule {
    rule("handshake", RuleKind::Handshake, RuleParams::Pose(pose_params()))
}

fn punch_rule() -> EventRule {
    rule("punch", RuleKind::Punch, RuleParams::Pose(pose_params()))
}

/// Two 80x200 people 215 px apart (centre to centre), facing each other.
/// With 16 px shoulder offsets and a 100 px arm, wrists at 60 degrees are
/// 215 - 32 - 2 * 100 * sin 60 = 10 px apart.
fn pair(arms_a: &[(i64, f64, f64)], arms_b: &[(i64, f64, f64)], dx: f64) -> Vec<Actor> {
    let a = posed(actor(1, "person", &[(0, 400.0, 250.0, 80.0, 200.0), (4000, 400.0, 250.0, 80.0, 200.0)]), 1.0, arms_a);
    let bx = 400.0 + dx;
    let b = posed(actor(2, "person", &[(0, bx, 250.0, 80.0, 200.0), (4000, bx, 250.0, 80.0, 200.0)]), -1.0, arms_b);
    vec![a, b]
}

const SHAKE: &[(i64, f64, f64)] = &[(0, 5.0, 5.0), (1000, 5.0, 5.0), (1700, 60.0, 5.0), (2000, 60.0, 5.0), (2700, 5.0, 5.0)];
const IDLE: &[(i64, f64, f64)] = &[(0, 5.0, 5.0)];

fn handshake_positive() -> Scenario {
    scenario(
        "handshake_positive",
        4000,
        vec![handshake_rule()],
        vec![truth(RuleKind::Handshake, 1000, 2700, &[1, 2])],
        pair(SHAKE, SHAKE, 215.0),
    )
}

fn handshake_negative_idle() -> Scenario {
    scenario("handshake_negative_idle", 4000, vec![handshake_rule()], vec![], pair(IDLE, IDLE, 215.0))
}

/// Raise and converge, then hold until the stream ends.
fn handshake_negative_phase_one() -> Scenario {
    let raise: &[(i64, f64, f64)] = &[(0, 5.0, 5.0), (1000, 5.0, 5.0), (1700, 60.0, 5.0)];
    scenario("handshake_negative_phase_one", 4000, vec![handshake_rule()], vec![], pair(raise, raise, 215.0))
}

/// Attacker's right arm swings to horizontal; its wrist (456 + 100 px) ends
/// 5 px short of the victim's right shoulder at 577 - 16 px.
fn punch_positive() -> Scenario {
    let jab: &[(i64, f64, f64)] = &[(0, 5.0, 5.0), (1000, 5.0, 5.0), (1500, 90.0, 5.0), (1700, 90.0, 5.0), (2200, 5.0, 5.0)];
    scenario(
        "punch_positive",
        4000,
        vec![punch_rule()],
        vec![truth(RuleKind::Punch, 1000, 2200, &[1, 2])],
        pair(jab, IDLE, 137.0),
    )
}

/// A handshake: the wrist never gets closer than ~108 px to a shoulder.
fn punch_negative_handshake() -> Scenario {
    scenario("punch_negative_handshake", 4000, vec![punch_rule()], vec![], pair(SHAKE, SHAKE, 215.0))
}

// --- traffic, parking, jaywalking, attributes -----------------------------

fn traffic_rule(region: Region, threshold: f64, window: i64) -> EventRule {
    EventRule::new("high-volume", RuleKind::HighVolumeTraffic, window, RuleParams::Traffic(TrafficParams { region, threshold }))
        .expect("valid rule")
}

fn creeping_cars(n: u64) -> Vec<Actor> {
    (0..n)
        .map(|k| {
            let x = 100.0 + 120.0 * k as f64;
            actor(k + 1, "car", &[(0, x, 425.0, 100.0, 50.0), (10_000, x + 60.0, 425.0, 100.0, 50.0)])
        })
        .collect()
}

/// Six cars inside the region in every frame against a threshold of 5.
fn traffic_positive() -> Scenario {
    let region = rect(60.0, 300.0, 840.0, 300.0);
    scenario(
        "traffic_positive",
        10_000,
        vec![traffic_rule(region, 5.0, WINDOW_MS)],
        vec![truth(RuleKind::HighVolumeTraffic, 0, 10_000, &[1, 2, 3, 4, 5, 6])],
        creeping_cars(6),
    )
}

fn traffic_negative() -> Scenario {
    let region = rect(60.0, 300.0, 840.0, 300.0);
    scenario("traffic_negative", 10_000, vec![traffic_rule(region, 5.0, WINDOW_MS)], vec![], creeping_cars(3))
}

fn parking_rule(slots: Vec<BoundingBox>) -> EventRule {
    rule(
        "slot-status",
        RuleKind::ParkingSlotStatus,
        RuleParams::Parking(ParkingParams { slots, ratio: 0.5, max_gap_frames: 3, min_frames: 1 }),
    )
}

/// A 120x60 car drives into a 120x60 slot at x=300 (arriving at 2 s) and
/// leaves from 8 s. Coverage exceeds half the slot while the car's x lies
/// in (240, 360): from 1.5 s to 8.5 s.
fn parking_positive() -> Scenario {
    let car = actor(1, "car", &[(0, 60.0, 300.0, 120.0, 60.0), (2000, 300.0, 300.0, 120.0, 60.0), (8000, 300.0, 300.0, 120.0, 60.0), (10_000, 540.0, 300.0, 120.0, 60.0)]);
    let other = actor(2, "car", &[(0, 700.0, 500.0, 120.0, 60.0), (10_000, 700.0, 500.0, 120.0, 60.0)]);
    scenario(
        "parking_positive",
        10_000,
        vec![parking_rule(vec![BoundingBox::new(300.0, 300.0, 120.0, 60.0)])],
        vec![truth(RuleKind::ParkingSlotStatus, 1500, 8500, &[1])],
        vec![car, other],
    )
}

/// A 100 px car straddling two 120 px slots covers 50/120 of each.
fn parking_negative_straddle() -> Scenario {
    let car = actor(1, "car", &[(0, 370.0, 300.0, 100.0, 60.0), (10_000, 370.0, 300.0, 100.0, 60.0)]);
    scenario(
        "parking_negative_straddle",
        10_000,
        vec![parking_rule(vec![BoundingBox::new(300.0, 300.0, 120.0, 60.0), BoundingBox::new(420.0, 300.0, 120.0, 60.0)])],
        vec![],
        vec![car],
    )
}

fn road() -> Region {
    rect(0.0, 300.0, W as f64, 160.0)
}

fn jaywalk_rule() -> EventRule {
    rule("jaywalk", RuleKind::Jaywalking, RuleParams::Jaywalk(JaywalkParams { region: road(), max_gap_frames: 3, min_frames: 3 }))
}

/// Crosses the road band y in (300, 460) at 100 px/s; the centroid
/// (y + 50) starts at 230 at 0.5 s, so it is inside from 1.2 s to 2.8 s.
fn jaywalk_positive() -> Scenario {
    let crosser = actor(1, "person", &[(500, 600.0, 180.0, 40.0, 100.0), (3500, 600.0, 480.0, 40.0, 100.0)]);
    let stroller = actor(2, "person", &[(0, 100.0, 180.0, 40.0, 100.0), (4000, 400.0, 180.0, 40.0, 100.0)]);
    let car = actor(3, "car", &[(0, 0.0, 340.0, 120.0, 60.0), (4000, 1000.0, 340.0, 120.0, 60.0)]);
    scenario(
        "jaywalk_positive",
        4000,
        vec![jaywalk_rule()],
        vec![truth(RuleKind::Jaywalking, 1200, 2800, &[1])],
        vec![crosser, stroller, car],
    )
}

/// Walks along the kerb: the box dips into the road but its centroid stays
/// at y = 270. A car drives inside the road band.
fn jaywalk_negative() -> Scenario {
    let walker = actor(1, "person", &[(0, 100.0, 220.0, 40.0, 100.0), (4000, 700.0, 220.0, 40.0, 100.0)]);
    let car = actor(2, "car", &[(0, 0.0, 340.0, 120.0, 60.0), (4000, 1000.0, 340.0, 120.0, 60.0)]);
    scenario("jaywalk_negative", 4000, vec![jaywalk_rule()], vec![], vec![walker, car])
}

fn attribute_rule() -> EventRule {
    rule(
        "red-car",
        RuleKind::AttributeQuery,
        RuleParams::Attribute(AttributeParams { key: "color".into(), value: "red".into() }),
    )
}

/// A red car enters at 1 s (frame 30).
fn attribute_positive() -> Scenario {
    let red = with_attr(actor(1, "car", &[(1000, 0.0, 340.0, 120.0, 60.0), (3000, 600.0, 340.0, 120.0, 60.0)]), "color", "Red");
    let blue = with_attr(actor(2, "car", &[(0, 800.0, 500.0, 120.0, 60.0), (3000, 800.0, 500.0, 120.0, 60.0)]), "color", "blue");
    scenario(
        "attribute_positive",
        3000,
        vec![attribute_rule()],
        vec![truth(RuleKind::AttributeQuery, 1000, 1001, &[1])],
        vec![red, blue],
    )
}

fn attribute_negative() -> Scenario {
    let blue = with_attr(actor(1, "car", &[(0, 0.0, 340.0, 120.0, 60.0), (3000, 600.0, 340.0, 120.0, 60.0)]), "color", "blue");
    let person = with_attr(actor(2, "person", &[(0, 800.0, 180.0, 40.0, 100.0), (3000, 800.0, 180.0, 40.0, 100.0)]), "color", "red");
    scenario("attribute_negative", 3000, vec![attribute_rule()], vec![], vec![blue, person])
}

// --- street ---------------------------------------------------------------

pub const STREET_WINDOW_MS: i64 = 60_000;

/// Parking lot with five parked cars, two pedestrians pacing the sidewalk
/// for the whole stream, a jaywalker every 20 s and a car driving through
/// every 6 s.
///
/// Jaywalker k starts at s = 2 s + 20 s·k at centroid y = 230 and walks down
/// 300 px in 3 s, so it is inside the road band from s + 0.7 s to s + 2.3 s.
pub fn street(name: &str, duration_ms: i64) -> Scenario {
    let lot = Region::new(vec![Point::new(40.0, 520.0), Point::new(720.0, 520.0), Point::new(720.0, 710.0), Point::new(40.0, 710.0)])
        .expect("valid lot");
    let mut actors = Vec::new();
    for k in 0..5u64 {
        let x = 60.0 + 130.0 * k as f64;
        actors.push(actor(k + 1, "car", &[(0, x, 580.0, 100.0, 50.0), (duration_ms, x, 580.0, 100.0, 50.0)]));
    }
    for (track, x0) in [(6u64, 100.0), (7, 1100.0)] {
        let mut keys = Vec::new();
        let mut t = 0;
        let mut x = x0;
        while t < duration_ms {
            keys.push((t, x, 180.0, 40.0, 100.0));
            t += 30_000;
            x = if x == 100.0 { 1100.0 } else { 100.0 };
        }
        keys.push((duration_ms, x, 180.0, 40.0, 100.0));
        actors.push(actor(track, "person", &keys));
    }
    let mut planted = Vec::new();
    let mut k = 0u64;
    loop {
        let s = 2000 + 20_000 * k as i64;
        if s + 3000 > duration_ms {
            break;
        }
        let x = 300.0 + 200.0 * (k % 3) as f64;
        actors.push(actor(100 + k, "person", &[(s, x, 180.0, 40.0, 100.0), (s + 3000, x, 480.0, 40.0, 100.0)]));
        planted.push(truth(RuleKind::Jaywalking, s + 700, s + 2300, &[100 + k]));
        k += 1;
    }
    let mut k = 0u64;
    loop {
        let s = 1000 + 6000 * k as i64;
        if s + 4000 > duration_ms {
            break;
        }
        actors.push(actor(1000 + k, "car", &[(s, 0.0, 340.0, 120.0, 60.0), (s + 4000, 1160.0, 340.0, 120.0, 60.0)]));
        k += 1;
    }
    let windows = duration_ms / STREET_WINDOW_MS;
    for w in 0..windows {
        planted.push(truth(RuleKind::HighVolumeTraffic, w * STREET_WINDOW_MS, (w + 1) * STREET_WINDOW_MS, &[1, 2, 3, 4, 5]));
    }
    planted.sort_by_key(|t| (t.interval.start, t.kind));
    let jay = EventRule::new(
        "jaywalk",
        RuleKind::Jaywalking,
        STREET_WINDOW_MS,
        RuleParams::Jaywalk(JaywalkParams { region: road(), max_gap_frames: 3, min_frames: 3 }),
    )
    .expect("valid rule");
    scenario(name, duration_ms, vec![traffic_rule(lot, 4.0, STREET_WINDOW_MS), jay], planted, actors)
}

pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "fall_positive",
        "fall_negative_walk",
        "fall_negative_moving",
        "horse_ride_positive",
        "horse_ride_negative_beside",
        "bike_ride_positive",
        "bike_ride_negative_stationary",
        "handshake_positive",
        "handshake_negative_idle",
        "handshake_negative_phase_one",
        "punch_positive",
        "punch_negative_handshake",
        "traffic_positive",
        "traffic_negative",
        "parking_positive",
        "parking_negative_straddle",
        "jaywalk_positive",
        "jaywalk_negative",
        "attribute_positive",
        "attribute_negative",
        "street",
        "street_10min",
    ]
}

pub fn builtin(name: &str) -> Option<Scenario> {
    Some(match name {
        "fall_positive" => fall_positive(),
        "fall_negative_walk" => fall_negative_walk(),
        "fall_negative_moving" => fall_negative_moving(),
        "horse_ride_positive" => horse_ride_positive(),
        "horse_ride_negative_beside" => horse_ride_negative_beside(),
        "bike_ride_positive" => bike_ride_positive(),
        "bike_ride_negative_stationary" => bike_ride_negative_stationary(),
        "handshake_positive" => handshake_positive(),
        "handshake_negative_idle" => handshake_negative_idle(),
        "handshake_negative_phase_one" => handshake_negative_phase_one(),
        "punch_positive" => punch_positive(),
        "punch_negative_handshake" => punch_negative_handshake(),
        "traffic_positive" => traffic_positive(),
        "traffic_negative" => traffic_negative(),
        "parking_positive" => parking_positive(),
        "parking_negative_straddle" => parking_negative_straddle(),
        "jaywalk_positive" => jaywalk_positive(),
        "jaywalk_negative" => jaywalk_negative(),
        "attribute_positive" => attribute_positive(),
        "attribute_negative" => attribute_negative(),
        "street" => street("street", 60_000),
        "street_10min" => street("street_10min", 600_000),
        _ => return None,
    })
}

/// Every built-in scenario, including the 10-minute street scene.
pub fn builtin_scenarios() -> Vec<Scenario> {
    builtin_names().into_iter().map(|n| builtin(n).expect("listed")).collect()
}
