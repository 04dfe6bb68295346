//! Fall: an abrupt rise in a person's box aspect ratio followed by
//! stillness.

use serde::{Deserialize, Serialize};

use super::{span_interval, EventRule, MatchNotification};
use crate::geometry::point_distance;
use crate::tag::VekgTag;
use crate::temporal::{default_penalty, no_motion_span, pelt_changepoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallParams {
    /// PELT penalty; `None` picks the BIC-style default per series.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    /// Minimum increase of the segment-mean aspect ratio at the changepoint.
    pub min_ratio_jump: f64,
    /// Speed at or below which the person counts as still, px per frame.
    pub alpha_px: f64,
    /// Frames after the changepoint within which stillness must begin.
    pub gap_frames: usize,
    /// Minimum length of the still run.
    pub still_frames: usize,
}

impl Default for FallParams {
    fn default() -> Self {
        Self { penalty: None, min_ratio_jump: 0.5, alpha_px: 10.0, gap_frames: 15, still_frames: 20 }
    }
}

pub fn eval_fall(rule: &EventRule, tag: &VekgTag, p: &FallParams) -> Vec<MatchNotification> {
    let mut out = Vec::new();
    for node in tag.nodes().iter().filter(|n| rule.label_matches(&n.label)) {
        // Present frames only: PELT needs gap-free input, so dropouts are
        // removed rather than filled.
        let frames: Vec<usize> = (0..tag.frame_count()).filter(|&i| node.is_present(i)).collect();
        if frames.len() < 2 {
            continue;
        }
        let boxes: Vec<_> = frames.iter().map(|&i| node.position(i).expect("present")).collect();
        let ratio: Vec<f64> = boxes.iter().map(|b| b.aspect_ratio()).collect();
        let penalty = p.penalty.unwrap_or_else(|| default_penalty(&ratio));
        let Ok(cps) = pelt_changepoints(&ratio, penalty) else { continue };

        // Speed per frame step across dropouts.
        let speed: Vec<Option<f64>> = (0..frames.len())
            .map(|k| {
                if k == 0 {
                    Some(0.0)
                } else {
                    let steps = (frames[k] - frames[k - 1]) as f64;
                    Some(point_distance(boxes[k].centroid(), boxes[k - 1].centroid()) / steps)
                }
            })
            .collect();
        let still = no_motion_span(&speed, p.alpha_px, p.still_frames);

        // Each still run is claimed by the first qualifying changepoint.
        let mut claimed = vec![false; still.len()];
        let mut bounds = vec![0];
        bounds.extend(cps.iter().copied());
        bounds.push(ratio.len());
        for (k, &c) in cps.iter().enumerate() {
            let before = &ratio[bounds[k]..c];
            let after = &ratio[c..bounds[k + 2]];
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let jump = mean(after) - mean(before);
            if jump < p.min_ratio_jump {
                continue;
            }
            let hit = still.iter().enumerate().find(|(h, s)| {
                let (s0, s1) = (s.start as usize, s.end as usize);
                !claimed[*h] && s0 <= c + p.gap_frames && s1 > c && s1 - s0.max(c) >= p.still_frames
            });
            if let Some((h, s)) = hit {
                claimed[h] = true;
                let last = s.end as usize - 1;
                out.push(
                    MatchNotification::new(rule, span_interval(tag, frames[c], frames[last]), vec![node.track_id])
                        .with("changepoint_frame", tag.frame_indices()[frames[c]] as f64)
                        .with("ratio_jump", jump)
                        .with("still_frames", (s.end as usize - s.start.max(c as i64) as usize) as f64),
                );
            }
        }
    }
    out
}
