//! Pair-relation queries answered two ways: by scanning every per-frame
//! graph's edge list, and by fetching series straight off a TAG. Both paths
//! produce identical summaries; the benchmark harness times them.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::tag::{TagError, VekgTag};
use crate::vekg::{Relation, RelationValue, VekgGraph};

/// Which ordered pairs to read and which relation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairQuery {
    pub pairs: Vec<(u64, u64)>,
    pub relation: Relation,
}

/// Per-pair summary over the frames where the pair is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSummary {
    pub source: u64,
    pub target: u64,
    pub frames: usize,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl PairSummary {
    fn new(source: u64, target: u64) -> Self {
        Self { source, target, frames: 0, min: f64::INFINITY, max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn add(&mut self, v: f64) {
        self.frames += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.sum += v;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.frames > 0).then(|| self.sum / self.frames as f64)
    }
}

/// Numeric reading of a relation slot for summaries.
pub fn numeric(v: RelationValue) -> f64 {
    match v {
        RelationValue::Real(x) => x,
        RelationValue::Bool(b) => b as u8 as f64,
        RelationValue::Topology(t) => t.bits() as f64,
        RelationValue::Direction(d) => d.map_or(-1.0, |d| d as u8 as f64),
    }
}

/// Baseline: walk every edge of every frame graph and pick out the queried
/// pairs.
pub fn scan_vekg(graphs: &[Arc<VekgGraph>], query: &PairQuery) -> Vec<PairSummary> {
    let mut out: Vec<PairSummary> = query.pairs.iter().map(|&(u, v)| PairSummary::new(u, v)).collect();
    for g in graphs {
        for ((u, v), edge) in g.edges() {
            for (k, &(qu, qv)) in query.pairs.iter().enumerate() {
                if qu == u && qv == v {
                    if let Some(val) = edge.get(query.relation) {
                        out[k].add(numeric(val));
                    }
                }
            }
        }
    }
    out
}

/// Direct edge fetch on the aggregated graph.
pub fn search_tag(tag: &VekgTag, query: &PairQuery) -> Result<Vec<PairSummary>, TagError> {
    query
        .pairs
        .iter()
        .map(|&(u, v)| {
            let series = tag.relation_series(u, v, query.relation)?;
            let mut s = PairSummary::new(u, v);
            for val in series.iter().flatten() {
                s.add(numeric(val));
            }
            Ok(s)
        })
        .collect()
}

/// Ordered pairs of distinct tracks present in at least `min_fraction` of
/// the window's frames.
pub fn persistent_pairs(tag: &VekgTag, min_fraction: f64) -> Vec<(u64, u64)> {
    let t = tag.frame_count().max(1) as f64;
    let ids: Vec<u64> =
        tag.nodes().iter().filter(|n| n.present_count() as f64 / t >= min_fraction).map(|n| n.track_id).collect();
    ids.iter().flat_map(|&u| ids.iter().filter(move |&&v| v != u).map(move |&v| (u, v))).collect()
}

/// Wall-clock samples of both query paths, in milliseconds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchComparison {
    pub scan_ms: Vec<f64>,
    pub tag_ms: Vec<f64>,
    /// Both paths returned the same summaries on every repetition.
    pub identical: bool,
}

/// Times `reps` alternating runs of the scan and the TAG fetch.
pub fn compare_search(
    graphs: &[Arc<VekgGraph>],
    tag: &VekgTag,
    query: &PairQuery,
    reps: usize,
) -> Result<SearchComparison, TagError> {
    let mut out = SearchComparison { identical: true, ..Default::default() };
    for _ in 0..reps {
        let t0 = Instant::now();
        let scanned = std::hint::black_box(scan_vekg(graphs, query));
        out.scan_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        let t1 = Instant::now();
        let fetched = std::hint::black_box(search_tag(tag, query)?);
        out.tag_ms.push(t1.elapsed().as_secs_f64() * 1e3);
        out.identical &= scanned == fetched;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::geometry::BoundingBox;
    use crate::ingest::{FrameDetections, ObjectNode};
    use crate::tag::aggregate;
    use crate::vekg::{build_frame_graph, RelationSet};
    use crate::windowing::WindowState;

    #[test]
    fn scan_and_fetch_agree() {
        let rels = RelationSet::new([Relation::Distance, Relation::Overlap]);
        let graphs: Vec<Arc<VekgGraph>> = (0..40)
            .map(|i| {
                let objs = (0..5)
                    .filter(|k| (i + k) % 7 != 0)
                    .map(|k| ObjectNode::new(k, "car", BoundingBox::new((k * 15 + i) as f64, k as f64 * 3.0, 20.0, 10.0)))
                    .collect();
                Arc::new(build_frame_graph(&FrameDetections::new(i, i as i64 * 33, objs), &rels))
            })
            .collect();
        let w = WindowState { index: 0, start: 0, end: 2000, graphs: graphs.clone() };
        let tag = aggregate(&w, &rels, Execution::Sequential).unwrap();
        for relation in [Relation::Distance, Relation::Overlap] {
            let q = PairQuery { pairs: vec![(0, 1), (3, 2), (4, 0)], relation };
            assert_eq!(scan_vekg(&graphs, &q), search_tag(&tag, &q).unwrap());
        }
    }
}
