//! Riding: rider overlaps the mount, sits above it, and both move the same
//! way.

use serde::{Deserialize, Serialize};

use super::{default_max_gap, merged_spans, span_interval, EventRule, MatchNotification};
use crate::geometry::DirectionClass;
use crate::tag::VekgTag;
use crate::vekg::Relation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RideParams {
    pub min_frames: usize,
    /// Each object's mean speed over the span must exceed this, px per frame.
    pub min_speed_px: f64,
    pub max_gap_frames: usize,
}

impl Default for RideParams {
    fn default() -> Self {
        Self { min_frames: 15, min_speed_px: 0.5, max_gap_frames: default_max_gap() }
    }
}

fn mean_displacement(d: &[Option<(f64, f64)>], s: usize, e: usize) -> Option<(f64, f64)> {
    // Element 0 of a displacement series is a placeholder, not a step.
    let steps: Vec<(f64, f64)> = (s.max(1)..=e).filter_map(|i| d[i]).collect();
    if steps.is_empty() {
        return None;
    }
    let n = steps.len() as f64;
    Some((steps.iter().map(|v| v.0).sum::<f64>() / n, steps.iter().map(|v| v.1).sum::<f64>() / n))
}

pub fn eval_ride(rule: &EventRule, tag: &VekgTag, p: &RideParams) -> Vec<MatchNotification> {
    let (rider_label, mount_label) = (&rule.labels[0], &rule.labels[1]);
    let mut out = Vec::new();
    let riders: Vec<_> = tag.nodes().iter().filter(|n| &n.label == rider_label).collect();
    let mounts: Vec<_> = tag.nodes().iter().filter(|n| &n.label == mount_label).collect();
    for r in &riders {
        for m in &mounts {
            if r.track_id == m.track_id {
                continue;
            }
            let (Ok(overlap), Ok(dir)) = (
                tag.relation_series(r.track_id, m.track_id, Relation::Overlap),
                tag.relation_series(r.track_id, m.track_id, Relation::Direction),
            ) else {
                continue;
            };
            let flags: Vec<bool> = (0..tag.frame_count())
                .map(|i| {
                    overlap.get(i).and_then(|v| v.as_bool()) == Some(true)
                        && dir.get(i).and_then(|v| v.as_direction()) == Some(DirectionClass::Above)
                })
                .collect();
            let spans = merged_spans(&flags, p.max_gap_frames, p.min_frames);
            if spans.is_empty() {
                continue;
            }
            let dr = tag.displacement_series(r.track_id).expect("node exists");
            let dm = tag.displacement_series(m.track_id).expect("node exists");
            for (s, e) in spans {
                let (Some(vr), Some(vm)) = (mean_displacement(&dr, s, e), mean_displacement(&dm, s, e)) else {
                    continue;
                };
                let dot = vr.0 * vm.0 + vr.1 * vm.1;
                let (sr, sm) = (vr.0.hypot(vr.1), vm.0.hypot(vm.1));
                if dot > 0.0 && sr > p.min_speed_px && sm > p.min_speed_px {
                    out.push(
                        MatchNotification::new(rule, span_interval(tag, s, e), vec![r.track_id, m.track_id])
                            .with("rider_speed_px", sr)
                            .with("mount_speed_px", sm)
                            .with("frames", (e - s + 1) as f64),
                    );
                }
            }
        }
    }
    out
}
