//! Rules tied to configured image regions: traffic volume, parking slot
//! occupancy and jaywalking.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{default_max_gap, merged_spans, span_interval, EventRule, MatchNotification};
use crate::geometry::{inside_region, overlap_ratio, BoundingBox, Region};
use crate::tag::VekgTag;
use crate::temporal::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    pub region: Region,
    /// Mean per-frame count must exceed this.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkingParams {
    pub slots: Vec<BoundingBox>,
    /// A car occupies a slot when it covers more than this fraction of it.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_max_gap")]
    pub max_gap_frames: usize,
    #[serde(default = "one")]
    pub min_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JaywalkParams {
    pub region: Region,
    #[serde(default = "default_max_gap")]
    pub max_gap_frames: usize,
    #[serde(default = "three")]
    pub min_frames: usize,
}

fn default_ratio() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

pub fn eval_traffic(rule: &EventRule, tag: &VekgTag, p: &TrafficParams) -> Vec<MatchNotification> {
    let t = tag.frame_count();
    if t == 0 {
        return Vec::new();
    }
    let mut total = 0usize;
    let mut counted = BTreeSet::new();
    for node in tag.nodes().iter().filter(|n| rule.label_matches(&n.label)) {
        for i in 0..t {
            if let Some(b) = node.position(i) {
                if inside_region(&b, &p.region) {
                    total += 1;
                    counted.insert(node.track_id);
                }
            }
        }
    }
    let mean = total as f64 / t as f64;
    if mean <= p.threshold {
        return Vec::new();
    }
    let (start, end) = tag.window_bounds();
    vec![MatchNotification::new(rule, Interval { start, end }, counted.into_iter().collect())
        .with("mean_count", mean)
        .with("frames", t as f64)]
}

pub fn eval_parking(rule: &EventRule, tag: &VekgTag, p: &ParkingParams) -> Vec<MatchNotification> {
    let t = tag.frame_count();
    let cars: Vec<_> = tag.nodes().iter().filter(|n| rule.label_matches(&n.label)).collect();
    let mut out = Vec::new();
    for (si, slot) in p.slots.iter().enumerate() {
        // Occupant per frame: the car covering most of the slot, above the ratio.
        let occupant: Vec<Option<(usize, f64)>> = (0..t)
            .map(|i| {
                cars.iter()
                    .enumerate()
                    .filter_map(|(k, c)| c.position(i).map(|b| (k, overlap_ratio(slot, &b))))
                    .filter(|&(_, r)| r > p.ratio)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            })
            .collect();
        if t == 0 {
            continue;
        }
        let occupied = occupant.iter().filter(|o| o.is_some()).count() as f64 / t as f64;
        for (k, car) in cars.iter().enumerate() {
            let flags: Vec<bool> = occupant.iter().map(|o| matches!(o, Some((c, _)) if *c == k)).collect();
            for (s, e) in merged_spans(&flags, p.max_gap_frames, p.min_frames) {
                let ratios: Vec<f64> =
                    occupant[s..=e].iter().filter_map(|o| o.filter(|(c, _)| *c == k).map(|(_, r)| r)).collect();
                let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
                out.push(
                    MatchNotification::new(rule, span_interval(tag, s, e), vec![car.track_id])
                        .with("slot", si as f64)
                        .with("mean_overlap_ratio", mean_ratio)
                        .with("slot_occupancy", occupied),
                );
            }
        }
    }
    out
}

pub fn eval_jaywalk(rule: &EventRule, tag: &VekgTag, p: &JaywalkParams) -> Vec<MatchNotification> {
    let mut out = Vec::new();
    for node in tag.nodes().iter().filter(|n| rule.label_matches(&n.label)) {
        let flags: Vec<bool> = (0..tag.frame_count())
            .map(|i| node.position(i).is_some_and(|b| inside_region(&b, &p.region)))
            .collect();
        for (s, e) in merged_spans(&flags, p.max_gap_frames, p.min_frames) {
            out.push(
                MatchNotification::new(rule, span_interval(tag, s, e), vec![node.track_id])
                    .with("frames", (e - s + 1) as f64),
            );
        }
    }
    out
}
