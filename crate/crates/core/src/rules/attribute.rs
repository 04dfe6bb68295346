//! Stateless attribute query, e.g. red cars.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{EventRule, MatchNotification};
use crate::ingest::FrameDetections;
use crate::temporal::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeParams {
    pub key: String,
    /// Compared case-insensitively.
    pub value: String,
}

/// Fires once per track, on the first frame where it matches.
pub fn eval_attribute(
    rule: &EventRule,
    frame: &FrameDetections,
    p: &AttributeParams,
    seen: &mut HashSet<u64>,
) -> Vec<MatchNotification> {
    let mut hits: Vec<u64> = frame
        .objects
        .iter()
        .filter(|o| rule.label_matches(&o.label))
        .filter(|o| o.attributes.get(&p.key).is_some_and(|v| v.to_lowercase() == p.value.to_lowercase()))
        .map(|o| o.track_id)
        .filter(|id| !seen.contains(id))
        .collect();
    hits.sort_unstable();
    hits.into_iter()
        .map(|id| {
            seen.insert(id);
            MatchNotification::new(rule, Interval { start: frame.timestamp, end: frame.timestamp + 1 }, vec![id])
                .with("frame", frame.frame_index as f64)
        })
        .collect()
}
