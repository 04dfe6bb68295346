//! Event rules evaluated over time-aggregated graphs.
//!
//! Every rule is a parameterized built-in. Stateful kinds run once per
//! window against the window's [`VekgTag`]; [`RuleKind::AttributeQuery`] is
//! stateless and runs per frame.
//!
//! Rule files are TOML:
//!
//! ```toml
//! [[rule]]
//! id = "lot-busy"
//! kind = "high_volume_traffic"
//! labels = ["car"]
//! window_length_ms = 10000
//! [rule.params]
//! threshold = 5.0
//! region = [[0, 0], [400, 0], [400, 300], [0, 300]]
//! ```

mod attribute;
mod fall;
mod pose;
mod ride;
mod zone;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::FrameDetections;
use crate::tag::VekgTag;
use crate::temporal::Interval;
use crate::vekg::{Relation, RelationSet};

pub use attribute::{eval_attribute, AttributeParams};
pub use fall::{eval_fall, FallParams};
pub use pose::{arm_angle, eval_handshake, eval_punch, PoseParams};
pub use ride::{eval_ride, RideParams};
pub use zone::{eval_jaywalk, eval_parking, eval_traffic, JaywalkParams, ParkingParams, TrafficParams};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("invalid rule `{id}`: {reason}")]
    InvalidRuleConfig { id: String, reason: String },
    #[error("cannot read rules file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse rules: {0}")]
    Parse(String),
}

fn invalid(id: &str, reason: impl Into<String>) -> RuleError {
    RuleError::InvalidRuleConfig { id: id.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    FallDetection,
    HorseRide,
    BikeRide,
    Handshake,
    Punch,
    HighVolumeTraffic,
    ParkingSlotStatus,
    Jaywalking,
    AttributeQuery,
}

impl RuleKind {
    pub const ALL: [RuleKind; 9] = [
        RuleKind::FallDetection,
        RuleKind::HorseRide,
        RuleKind::BikeRide,
        RuleKind::Handshake,
        RuleKind::Punch,
        RuleKind::HighVolumeTraffic,
        RuleKind::ParkingSlotStatus,
        RuleKind::Jaywalking,
        RuleKind::AttributeQuery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::FallDetection => "fall_detection",
            RuleKind::HorseRide => "horse_ride",
            RuleKind::BikeRide => "bike_ride",
            RuleKind::Handshake => "handshake",
            RuleKind::Punch => "punch",
            RuleKind::HighVolumeTraffic => "high_volume_traffic",
            RuleKind::ParkingSlotStatus => "parking_slot_status",
            RuleKind::Jaywalking => "jaywalking",
            RuleKind::AttributeQuery => "attribute_query",
        }
    }

    pub fn default_labels(self) -> Vec<String> {
        let l: &[&str] = match self {
            RuleKind::FallDetection | RuleKind::Handshake | RuleKind::Punch | RuleKind::Jaywalking => &["person"],
            RuleKind::HorseRide => &["person", "horse"],
            RuleKind::BikeRide => &["person", "bike"],
            RuleKind::HighVolumeTraffic | RuleKind::ParkingSlotStatus | RuleKind::AttributeQuery => &["car"],
        };
        l.iter().map(|s| s.to_string()).collect()
    }

    /// Stateless kinds are matched per frame instead of per window.
    pub fn is_stateless(self) -> bool {
        self == RuleKind::AttributeQuery
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kind-specific thresholds.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleParams {
    Fall(FallParams),
    Ride(RideParams),
    Pose(PoseParams),
    Traffic(TrafficParams),
    Parking(ParkingParams),
    Jaywalk(JaywalkParams),
    Attribute(AttributeParams),
}

/// One declarative rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule", into = "RawRule")]
pub struct EventRule {
    pub id: String,
    pub kind: RuleKind,
    pub labels: Vec<String>,
    pub window_length_ms: i64,
    pub params: RuleParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: String,
    kind: RuleKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
    window_length_ms: i64,
    #[serde(default)]
    params: toml::Table,
}

fn params_from<T: serde::de::DeserializeOwned>(id: &str, table: toml::Table) -> Result<T, RuleError> {
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| invalid(id, e.message().to_string()))
}

impl TryFrom<RawRule> for EventRule {
    type Error = RuleError;

    fn try_from(raw: RawRule) -> Result<Self, Self::Error> {
        let id = raw.id.as_str();
        let params = match raw.kind {
            RuleKind::FallDetection => RuleParams::Fall(params_from(id, raw.params)?),
            RuleKind::HorseRide | RuleKind::BikeRide => RuleParams::Ride(params_from(id, raw.params)?),
            RuleKind::Handshake | RuleKind::Punch => RuleParams::Pose(params_from(id, raw.params)?),
            RuleKind::HighVolumeTraffic => RuleParams::Traffic(params_from(id, raw.params)?),
            RuleKind::ParkingSlotStatus => RuleParams::Parking(params_from(id, raw.params)?),
            RuleKind::Jaywalking => RuleParams::Jaywalk(params_from(id, raw.params)?),
            RuleKind::AttributeQuery => RuleParams::Attribute(params_from(id, raw.params)?),
        };
        let labels = if raw.labels.is_empty() { raw.kind.default_labels() } else { raw.labels };
        let rule = EventRule { id: raw.id, kind: raw.kind, labels, window_length_ms: raw.window_length_ms, params };
        rule.validate()?;
        Ok(rule)
    }
}

impl From<EventRule> for RawRule {
    fn from(r: EventRule) -> Self {
        let table = match &r.params {
            RuleParams::Fall(p) => toml::Table::try_from(p),
            RuleParams::Ride(p) => toml::Table::try_from(p),
            RuleParams::Pose(p) => toml::Table::try_from(p),
            RuleParams::Traffic(p) => toml::Table::try_from(p),
            RuleParams::Parking(p) => toml::Table::try_from(p),
            RuleParams::Jaywalk(p) => toml::Table::try_from(p),
            RuleParams::Attribute(p) => toml::Table::try_from(p),
        }
        .expect("rule params serialize to a table");
        RawRule { id: r.id, kind: r.kind, labels: r.labels, window_length_ms: r.window_length_ms, params: table }
    }
}

fn finite(id: &str, name: &str, v: f64) -> Result<(), RuleError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(id, format!("{name} must be finite")))
    }
}

impl EventRule {
    pub fn new(id: impl Into<String>, kind: RuleKind, window_length_ms: i64, params: RuleParams) -> Result<Self, RuleError> {
        let rule = EventRule { id: id.into(), kind, labels: kind.default_labels(), window_length_ms, params };
        rule.validate()?;
        Ok(rule)
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Result<Self, RuleError> {
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let id = self.id.as_str();
        if id.is_empty() {
            return Err(invalid(id, "empty rule id"));
        }
        if self.window_length_ms <= 0 {
            return Err(invalid(id, "window_length_ms must be positive"));
        }
        if self.labels.is_empty() {
            return Err(invalid(id, "labels must not be empty"));
        }
        let kind_ok = matches!(
            (self.kind, &self.params),
            (RuleKind::FallDetection, RuleParams::Fall(_))
                | (RuleKind::HorseRide | RuleKind::BikeRide, RuleParams::Ride(_))
                | (RuleKind::Handshake | RuleKind::Punch, RuleParams::Pose(_))
                | (RuleKind::HighVolumeTraffic, RuleParams::Traffic(_))
                | (RuleKind::ParkingSlotStatus, RuleParams::Parking(_))
                | (RuleKind::Jaywalking, RuleParams::Jaywalk(_))
                | (RuleKind::AttributeQuery, RuleParams::Attribute(_))
        );
        if !kind_ok {
            return Err(invalid(id, format!("params do not belong to kind {}", self.kind)));
        }
        match &self.params {
            RuleParams::Fall(p) => {
                finite(id, "alpha_px", p.alpha_px)?;
                finite(id, "min_ratio_jump", p.min_ratio_jump)?;
                if let Some(pen) = p.penalty {
                    if !(pen.is_finite() && pen >= 0.0) {
                        return Err(invalid(id, "penalty must be finite and non-negative"));
                    }
                }
                if p.still_frames == 0 {
                    return Err(invalid(id, "still_frames must be at least 1"));
                }
            }
            RuleParams::Ride(p) => {
                finite(id, "min_speed_px", p.min_speed_px)?;
                if self.labels.len() != 2 {
                    return Err(invalid(id, "ride rules take exactly two labels: rider, mount"));
                }
                if p.min_frames == 0 {
                    return Err(invalid(id, "min_frames must be at least 1"));
                }
            }
            RuleParams::Pose(p) => {
                finite(id, "contact_px", p.contact_px)?;
                for v in [p.epsilon_deg, p.epsilon_px, p.max_angle_deg].into_iter().flatten() {
                    finite(id, "pose threshold", v)?;
                }
                if p.phase_frames < 3 {
                    return Err(invalid(id, "phase_frames must be at least 3"));
                }
            }
            RuleParams::Traffic(p) => finite(id, "threshold", p.threshold)?,
            RuleParams::Parking(p) => {
                finite(id, "ratio", p.ratio)?;
                if p.slots.is_empty() {
                    return Err(invalid(id, "at least one slot is required"));
                }
                for s in &p.slots {
                    s.validate().map_err(|e| invalid(id, format!("slot: {e}")))?;
                }
            }
            RuleParams::Jaywalk(p) => {
                if p.min_frames == 0 {
                    return Err(invalid(id, "min_frames must be at least 1"));
                }
            }
            RuleParams::Attribute(p) => {
                if p.key.is_empty() {
                    return Err(invalid(id, "attribute key must not be empty"));
                }
            }
        }
        Ok(())
    }

    /// Pair relations the rule reads off TAG edges.
    pub fn required_relations(&self) -> RelationSet {
        match self.kind {
            RuleKind::HorseRide | RuleKind::BikeRide => RelationSet::new([Relation::Overlap, Relation::Direction]),
            _ => RelationSet::empty(),
        }
    }

    pub fn label_matches(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Evaluates a stateful rule on one window's TAG. Stateless rules
    /// return nothing here; see [`EventRule::evaluate_frame`].
    pub fn evaluate(&self, tag: &VekgTag) -> Vec<MatchNotification> {
        let mut out = match &self.params {
            RuleParams::Fall(p) => eval_fall(self, tag, p),
            RuleParams::Ride(p) => eval_ride(self, tag, p),
            RuleParams::Pose(p) if self.kind == RuleKind::Handshake => eval_handshake(self, tag, p),
            RuleParams::Pose(p) => eval_punch(self, tag, p),
            RuleParams::Traffic(p) => eval_traffic(self, tag, p),
            RuleParams::Parking(p) => eval_parking(self, tag, p),
            RuleParams::Jaywalk(p) => eval_jaywalk(self, tag, p),
            RuleParams::Attribute(_) => Vec::new(),
        };
        out.sort_by(notification_order);
        out
    }

    /// Per-frame evaluation of a stateless rule; `seen` carries first
    /// appearances across frames.
    pub fn evaluate_frame(&self, frame: &FrameDetections, seen: &mut HashSet<u64>) -> Vec<MatchNotification> {
        match &self.params {
            RuleParams::Attribute(p) => eval_attribute(self, frame, p, seen),
            _ => Vec::new(),
        }
    }

    /// Copy with every pixel-valued coordinate and threshold multiplied by `k`.
    pub fn scaled(&self, k: f64) -> EventRule {
        let mut r = self.clone();
        match &mut r.params {
            RuleParams::Fall(p) => p.alpha_px *= k,
            RuleParams::Ride(p) => p.min_speed_px *= k,
            RuleParams::Pose(p) => {
                p.contact_px *= k;
                if let Some(e) = &mut p.epsilon_px {
                    *e *= k;
                }
            }
            RuleParams::Traffic(p) => p.region = p.region.scaled(k).expect("scaling keeps a valid region"),
            RuleParams::Parking(p) => p.slots = p.slots.iter().map(|s| s.scaled(k)).collect(),
            RuleParams::Jaywalk(p) => p.region = p.region.scaled(k).expect("scaling keeps a valid region"),
            RuleParams::Attribute(_) => {}
        }
        r
    }
}

/// A detected event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchNotification {
    #[serde(rename = "rule")]
    pub rule_id: String,
    pub kind: RuleKind,
    pub interval: Interval,
    pub participants: Vec<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, f64>,
}

impl MatchNotification {
    pub fn new(rule: &EventRule, interval: Interval, participants: Vec<u64>) -> Self {
        Self { rule_id: rule.id.clone(), kind: rule.kind, interval, participants, evidence: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        if value.is_finite() {
            self.evidence.insert(key.to_string(), value);
        }
        self
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("notification serialization cannot fail")
    }
}

/// Stream order: interval start, then rule id, then end and participants.
pub fn notification_order(a: &MatchNotification, b: &MatchNotification) -> std::cmp::Ordering {
    (a.interval.start, &a.rule_id, a.interval.end, &a.participants)
        .cmp(&(b.interval.start, &b.rule_id, b.interval.end, &b.participants))
}

/// Registered rules, grouped by window length.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<EventRule>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RuleFile {
    #[serde(default, rename = "rule")]
    rules: Vec<EventRule>,
}

impl RuleSet {
    pub fn rules(&self) -> &[EventRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EventRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn from_toml(text: &str) -> Result<Self, RuleError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        register_rules(file.rules)
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuleError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RuleFile { rules: self.rules.clone() }).expect("rules serialize")
    }

    /// Same rules with every window length replaced.
    pub fn with_window_length(&self, ms: i64) -> Result<Self, RuleError> {
        register_rules(self.rules.iter().cloned().map(|mut r| {
            r.window_length_ms = ms;
            r
        }))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { rules: self.rules.iter().map(|r| r.scaled(k)).collect() }
    }

    /// The indexed rules as their own set.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { rules: indices.iter().map(|&i| self.rules[i].clone()).collect() }
    }

    /// Window lengths of the stateful rules with the indices of their rules.
    pub fn window_groups(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut g: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rules.iter().enumerate() {
            if !r.kind.is_stateless() {
                g.entry(r.window_length_ms).or_default().push(i);
            }
        }
        g
    }

    pub fn stateless(&self) -> impl Iterator<Item = &EventRule> {
        self.rules.iter().filter(|r| r.kind.is_stateless())
    }

    /// Union of the relations required by the given rules.
    pub fn required_relations(&self, indices: &[usize]) -> RelationSet {
        indices.iter().fold(RelationSet::empty(), |acc, &i| acc.union(&self.rules[i].required_relations()))
    }

    pub fn all_required_relations(&self) -> RelationSet {
        self.rules.iter().fold(RelationSet::empty(), |acc, r| acc.union(&r.required_relations()))
    }

    /// Evaluates the indexed rules on one TAG; output in stream order.
    pub fn evaluate_tag(&self, indices: &[usize], tag: &VekgTag, exec: Execution) -> Vec<MatchNotification> {
        let mut out = exec.flat_map(indices, |&i| self.rules[i].evaluate(tag));
        out.sort_by(notification_order);
        out
    }
}

/// Validates configs and builds a registry; rule ids must be unique.
pub fn register_rules(configs: impl IntoIterator<Item = EventRule>) -> Result<RuleSet, RuleError> {
    let mut ids = HashSet::new();
    let mut rules = Vec::new();
    for r in configs {
        r.validate()?;
        if !ids.insert(r.id.clone()) {
            return Err(invalid(&r.id, "duplicate rule id"));
        }
        rules.push(r);
    }
    Ok(RuleSet { rules })
}

/// `[T[i], T[j] + 1)` for the inclusive frame span `i..=j`.
pub(crate) fn span_interval(tag: &VekgTag, i: usize, j: usize) -> Interval {
    let ts = tag.timestamps();
    Interval { start: ts[i], end: ts[j] + 1 }
}

/// Inclusive spans of `true`, merged across gaps of at most `max_gap`
/// frames, keeping spans of at least `min_len` frames.
pub(crate) fn merged_spans(flags: &[bool], max_gap: usize, min_len: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if flags[i] {
            let s = i;
            while i < flags.len() && flags[i] {
                i += 1;
            }
            match runs.last_mut() {
                Some(last) if s - last.1 - 1 <= max_gap => last.1 = i - 1,
                _ => runs.push((s, i - 1)),
            }
        } else {
            i += 1;
        }
    }
    runs.retain(|&(s, e)| e - s + 1 >= min_len);
    runs
}

pub(crate) fn default_max_gap() -> usize {
    3
}
