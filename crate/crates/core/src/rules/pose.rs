//! Two-phase pose rules: handshake and punch.
//!
//! Both rules look for an approach phase (arm angle rising while a
//! hand-to-target distance falls) followed within a gap by a retreat phase
//! (the reverse). Phases are labelled with sliding trend windows of
//! `phase_frames` frames; consecutive windows with the same label form a run.
//! The closest approach inside the matched span must come within
//! `contact_px` with every arm angle below the kind's angle limit.

use serde::{Deserialize, Serialize};

use super::{span_interval, EventRule, MatchNotification, RuleKind};
use crate::geometry::{point_distance, segment_angle, Segment};
use crate::ingest::{KeypointName, Keypoints};
use crate::tag::{TagNode, VekgTag};
use crate::temporal::{trend, Interval, Trend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseParams {
    /// Width of the sliding trend window.
    pub phase_frames: usize,
    /// Largest allowed gap between the two phases, in frames.
    pub gap_frames: usize,
    /// The hand must come at least this close to its target.
    pub contact_px: f64,
    /// Trend deadband for angles, degrees per frame (default: 1% of range).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_deg: Option<f64>,
    /// Trend deadband for distances, px per frame (default: 1% of range).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_px: Option<f64>,
    /// Upper angle bound at contact (default 90 for handshake, 180 for punch).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_angle_deg: Option<f64>,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            phase_frames: 10,
            gap_frames: 30,
            contact_px: 30.0,
            epsilon_deg: None,
            epsilon_px: None,
            max_angle_deg: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Right,
    Left,
}

impl Side {
    fn joints(self) -> (KeypointName, KeypointName, KeypointName, KeypointName) {
        use KeypointName::*;
        match self {
            Side::Right => (RightShoulder, RightElbow, RightWrist, RightHip),
            Side::Left => (LeftShoulder, LeftElbow, LeftWrist, LeftHip),
        }
    }
}

/// Angle between the upper arm (shoulder→elbow) and the torso side
/// (shoulder→hip), in degrees: about 0 with the arm hanging down.
pub fn arm_angle(kp: &Keypoints, right: bool) -> Option<f64> {
    let (shoulder, elbow, _, hip) = if right { Side::Right.joints() } else { Side::Left.joints() };
    let s = kp.get(shoulder)?;
    segment_angle(&Segment::new(s, kp.get(elbow)?), &Segment::new(s, kp.get(hip)?)).ok()
}

fn angle_series(tag: &VekgTag, node: &TagNode, side: Side) -> Vec<Option<f64>> {
    (0..tag.frame_count()).map(|i| node.keypoints(i).and_then(|kp| arm_angle(kp, side == Side::Right))).collect()
}

fn wrist_series(tag: &VekgTag, node: &TagNode, side: Side) -> Vec<Option<crate::geometry::Point>> {
    let wrist = side.joints().2;
    (0..tag.frame_count()).map(|i| node.keypoints(i).and_then(|kp| kp.get(wrist))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Approach,
    Retreat,
}

struct Candidate {
    first: usize,
    last: usize,
    contact: usize,
    min_beta: f64,
}

/// Finds approach→retreat sequences; spans are inclusive frame ranges.
fn two_phase(thetas: &[&[Option<f64>]], beta: &[Option<f64>], p: &PoseParams, max_angle: f64) -> Vec<Candidate> {
    let n = beta.len();
    let l = p.phase_frames;
    if n < l {
        return Vec::new();
    }
    let labels: Vec<Option<Phase>> = (0..=n - l)
        .map(|pos| {
            let span = Interval { start: pos as i64, end: (pos + l) as i64 };
            let b = trend(beta, span, p.epsilon_px);
            let th: Vec<Trend> = thetas.iter().map(|t| trend(t, span, p.epsilon_deg)).collect();
            if b == Trend::Decreasing && th.iter().all(|&t| t == Trend::Increasing) {
                Some(Phase::Approach)
            } else if b == Trend::Increasing && th.iter().all(|&t| t == Trend::Decreasing) {
                Some(Phase::Retreat)
            } else {
                None
            }
        })
        .collect();

    // Runs of equal labels, with same-label neighbours merged across short gaps.
    let mut runs: Vec<(Phase, usize, usize)> = Vec::new();
    for (pos, lab) in labels.iter().enumerate() {
        let Some(ph) = *lab else { continue };
        match runs.last_mut() {
            Some(r) if r.0 == ph && pos - r.2 - 1 <= p.gap_frames => r.2 = pos,
            _ => runs.push((ph, pos, pos)),
        }
    }

    let mut out = Vec::new();
    let mut k = 0;
    while k + 1 < runs.len() {
        let (a, b) = (runs[k], runs[k + 1]);
        if a.0 == Phase::Approach && b.0 == Phase::Retreat && b.1 - a.2 - 1 <= p.gap_frames {
            let first = a.1;
            let last = b.2 + l - 1;
            let contact = (first..=last)
                .filter_map(|i| beta[i].map(|v| (i, v)))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((ci, min_beta)) = contact {
                let angles_ok =
                    thetas.iter().all(|t| matches!(t[ci], Some(a) if a > 0.0 && a < max_angle));
                if min_beta <= p.contact_px && angles_ok {
                    out.push(Candidate { first, last, contact: ci, min_beta });
                    k += 2;
                    continue;
                }
            }
        }
        k += 1;
    }
    out
}

fn persons<'a>(rule: &'a EventRule, tag: &'a VekgTag) -> Vec<&'a TagNode> {
    tag.nodes().iter().filter(|n| rule.label_matches(&n.label) && n.has_keypoints()).collect()
}

pub fn eval_handshake(rule: &EventRule, tag: &VekgTag, p: &PoseParams) -> Vec<MatchNotification> {
    debug_assert_eq!(rule.kind, RuleKind::Handshake);
    let max_angle = p.max_angle_deg.unwrap_or(90.0);
    let people = persons(rule, tag);
    let mut out = Vec::new();
    for (ia, a) in people.iter().enumerate() {
        for b in &people[ia + 1..] {
            let mut found: Vec<(Candidate, Side)> = Vec::new();
            for side in [Side::Right, Side::Left] {
                let ta = angle_series(tag, a, side);
                let tb = angle_series(tag, b, side);
                let wa = wrist_series(tag, a, side);
                let wb = wrist_series(tag, b, side);
                let beta: Vec<Option<f64>> =
                    wa.iter().zip(&wb).map(|(x, y)| Some(point_distance((*x)?, (*y)?))).collect();
                for c in two_phase(&[&ta, &tb], &beta, p, max_angle) {
                    // A shake already found with the other hand wins.
                    if !found.iter().any(|(f, _)| f.first <= c.last && c.first <= f.last) {
                        found.push((c, side));
                    }
                }
            }
            for (c, side) in found {
                out.push(
                    MatchNotification::new(rule, span_interval(tag, c.first, c.last), vec![a.track_id, b.track_id])
                        .with("min_wrist_distance_px", c.min_beta)
                        .with("contact_frame", tag.frame_indices()[c.contact] as f64)
                        .with("left_hand", (side == Side::Left) as u8 as f64),
                );
            }
        }
    }
    out
}

pub fn eval_punch(rule: &EventRule, tag: &VekgTag, p: &PoseParams) -> Vec<MatchNotification> {
    debug_assert_eq!(rule.kind, RuleKind::Punch);
    let max_angle = p.max_angle_deg.unwrap_or(180.0);
    let people = persons(rule, tag);
    let mut out = Vec::new();
    for attacker in &people {
        let theta = angle_series(tag, attacker, Side::Right);
        let wrist = wrist_series(tag, attacker, Side::Right);
        for victim in &people {
            if victim.track_id == attacker.track_id {
                continue;
            }
            let beta: Vec<Option<f64>> = (0..tag.frame_count())
                .map(|i| {
                    let w = wrist[i]?;
                    let kp = victim.keypoints(i)?;
                    let d = |k| kp.get(k).map(|s| point_distance(w, s));
                    match (d(KeypointName::RightShoulder), d(KeypointName::LeftShoulder)) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (x, y) => x.or(y),
                    }
                })
                .collect();
            for c in two_phase(&[&theta], &beta, p, max_angle) {
                out.push(
                    MatchNotification::new(
                        rule,
                        span_interval(tag, c.first, c.last),
                        vec![attacker.track_id, victim.track_id],
                    )
                    .with("min_wrist_shoulder_px", c.min_beta)
                    .with("contact_frame", tag.frame_indices()[c.contact] as f64),
                );
            }
        }
    }
    out
}
