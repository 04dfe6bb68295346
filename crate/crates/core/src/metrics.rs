//! Accuracy scoring against planted ground truth and per-window latency
//! decomposition.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::ingest::FrameDetections;
use crate::rules::{MatchNotification, RuleKind, RuleSet};
use crate::tag::{aggregate, reduction_report, ReductionReport};
use crate::temporal::Interval;
use crate::vekg::{build_frame_graph, VekgGraph};
use crate::windowing::WindowState;

/// Default temporal IoU needed for a notification to count as a hit.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// One planted event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: RuleKind,
    pub interval: Interval,
    #[serde(default)]
    pub participants: Vec<u64>,
}

impl TruthEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("truth serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl AccuracyReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_score =
            if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { tp, fp, fn_, precision, recall, f_score }
    }

    /// Pools counts of several reports.
    pub fn merge(reports: impl IntoIterator<Item = AccuracyReport>) -> Self {
        let (tp, fp, fn_) =
            reports.into_iter().fold((0, 0, 0), |acc, r| (acc.0 + r.tp, acc.1 + r.fp, acc.2 + r.fn_));
        Self::from_counts(tp, fp, fn_)
    }
}

/// Greedy one-to-one matching by temporal IoU (highest first), same kind
/// only.
pub fn score(notifications: &[MatchNotification], truth: &[TruthEvent], iou_threshold: f64) -> AccuracyReport {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, n) in notifications.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            if n.kind != t.kind {
                continue;
            }
            let iou = n.interval.iou(&t.interval);
            if iou >= iou_threshold {
                cand.push((iou, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_n = vec![false; notifications.len()];
    let mut used_t = vec![false; truth.len()];
    let mut tp = 0;
    for (_, i, j) in cand {
        if !used_n[i] && !used_t[j] {
            used_n[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }
    AccuracyReport::from_counts(tp, notifications.len() - tp, truth.len() - tp)
}

/// Wall-clock split of one window's matching latency, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub window: u64,
    pub vekg_construction_ms: f64,
    pub tag_construction_ms: f64,
    pub tag_search_ms: f64,
    pub total_ms: f64,
}

impl LatencyReport {
    pub fn new(window: u64, vekg: Duration, tag: Duration, search: Duration) -> Self {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let (v, t, s) = (ms(vekg), ms(tag), ms(search));
        Self { window, vekg_construction_ms: v, tag_construction_ms: t, tag_search_ms: s, total_ms: v + t + s }
    }
}

/// Runs one window end to end with per-stage timing.
pub fn time_window_run(
    index: u64,
    start: i64,
    end: i64,
    frames: &[FrameDetections],
    rules: &RuleSet,
    exec: Execution,
) -> (Vec<MatchNotification>, LatencyReport, ReductionReport) {
    let indices: Vec<usize> = rules.window_groups().into_values().flatten().collect();
    let relations = rules.required_relations(&indices);

    let t0 = Instant::now();
    let graphs: Vec<Arc<VekgGraph>> = exec.map(frames, |f| Arc::new(build_frame_graph(f, &relations)));
    let vekg = t0.elapsed();

    let window = WindowState { index, start, end, graphs };
    let t1 = Instant::now();
    let tag = aggregate(&window, &relations, exec).expect("graphs built with the required relations");
    let tag_time = t1.elapsed();

    let t2 = Instant::now();
    let notes = rules.evaluate_tag(&indices, &tag, exec);
    let search = t2.elapsed();

    (notes, LatencyReport::new(index, vekg, tag_time, search), reduction_report(&window, &tag))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Human-readable latency/reduction table.
pub fn render_table(latency: &[LatencyReport], reduction: &[ReductionReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8}",
        "window", "vekg_ms", "tag_ms", "search_ms", "total_ms", "rin", "rie"
    );
    for (l, r) in latency.iter().zip(reduction) {
        let _ = writeln!(
            out,
            "{:>6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>8.4} {:>8.4}",
            l.window, l.vekg_construction_ms, l.tag_construction_ms, l.tag_search_ms, l.total_ms, r.rin, r.rie
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(kind: RuleKind, s: i64, e: i64) -> MatchNotification {
        MatchNotification {
            rule_id: "r".into(),
            kind,
            interval: Interval::new(s, e).unwrap(),
            participants: vec![],
            evidence: Default::default(),
        }
    }

    fn truth(kind: RuleKind, s: i64, e: i64) -> TruthEvent {
        TruthEvent { kind, interval: Interval::new(s, e).unwrap(), participants: vec![] }
    }

    #[test]
    fn formulas_by_hand() {
        let r = AccuracyReport::from_counts(9, 1, 2);
        assert!((r.precision - 0.9).abs() < 1e-15);
        assert!((r.recall - 9.0 / 11.0).abs() < 1e-15);
        assert!((r.f_score - 0.857_142_857_142_857_1).abs() < 1e-12);
        let z = AccuracyReport::from_counts(0, 0, 3);
        assert_eq!((z.precision, z.recall, z.f_score), (0.0, 0.0, 0.0));
    }

    #[test]
    fn greedy_matching_is_one_to_one() {
        let k = RuleKind::Jaywalking;
        let n = vec![note(k, 0, 100), note(k, 10, 110), note(RuleKind::Punch, 0, 100)];
        let t = vec![truth(k, 0, 100)];
        let r = score(&n, &t, 0.3);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 2, 0));
        let r = score(&[], &t, 0.3);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 1));
        let r = score(&[note(k, 0, 100)], &[truth(k, 80, 200)], 0.3);
        assert_eq!(r.tp, 0);
    }

    #[test]
    fn latency_total_is_sum() {
        let l = LatencyReport::new(0, Duration::from_micros(1500), Duration::from_micros(250), Duration::from_micros(5));
        assert!((l.total_ms - 1.755).abs() < 1e-12);
    }

    #[test]
    fn empty_window_run() {
        let (n, l, r) = time_window_run(0, 0, 1000, &[], &RuleSet::default(), Execution::Sequential);
        assert!(n.is_empty());
        assert_eq!(l.total_ms, l.vekg_construction_ms + l.tag_construction_ms + l.tag_search_ms);
        assert_eq!(r.tag_nodes, 0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
