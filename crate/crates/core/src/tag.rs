//! Time-aggregated graphs.
//!
//! A [`VekgTag`] folds every graph of one window into a single graph whose
//! nodes are the union of the window's tracks and whose edges carry one
//! value per window frame. Slots where an endpoint is absent read as the
//! don't-care marker X, represented as `None` in the query views.
//!
//! Storage is sparse: each node keeps a presence bitmap over the window and
//! its positions over its own `[first, last]` frame range; pair series are
//! only materialized for pairs that are ever present together, over their
//! shared range. Pairs that never meet are still logical edges (every slot
//! X), so the edge count is `n²` regardless.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{point_distance, BoundingBox, Point};
use crate::ingest::Keypoints;
use crate::vekg::{Relation, RelationSet, RelationValue};
use crate::windowing::WindowState;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagError {
    #[error("frame {frame} lacks relation(s) {missing} required for aggregation")]
    RelationVocabularyMismatch { frame: u64, missing: String },
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("relation `{0}` is not materialized")]
    UnknownRelation(Relation),
    #[error("{0}")]
    WrongChannel(&'static str),
}

/// What to read off an edge: positions (self-loops) or a relation (pairs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Position,
    Relation(Relation),
}

/// A TAG node: one track seen at least once in the window.
#[derive(Debug, Clone)]
pub struct TagNode {
    pub track_id: u64,
    pub label: String,
    /// Last-seen attributes.
    pub attributes: BTreeMap<String, String>,
    first: usize,
    last: usize,
    presence: Vec<u64>,
    present_count: usize,
    positions: Vec<BoundingBox>,
    keypoints: Option<Vec<Option<Keypoints>>>,
}

impl TagNode {
    pub fn is_present(&self, i: usize) -> bool {
        let (w, b) = (i / 64, i % 64);
        w < self.presence.len() && self.presence[w] >> b & 1 == 1
    }

    /// First and last frame ordinals at which the track is present.
    pub fn extent(&self) -> (usize, usize) {
        (self.first, self.last)
    }

    pub fn present_count(&self) -> usize {
        self.present_count
    }

    pub fn position(&self, i: usize) -> Option<BoundingBox> {
        if self.is_present(i) {
            Some(self.positions[i - self.first])
        } else {
            None
        }
    }

    pub fn keypoints(&self, i: usize) -> Option<&Keypoints> {
        if !self.is_present(i) {
            return None;
        }
        self.keypoints.as_ref()?[i - self.first].as_ref()
    }

    pub fn has_keypoints(&self) -> bool {
        self.keypoints.is_some()
    }
}

/// Relation-major series of one ordered pair over the pair's shared range.
#[derive(Debug, Clone)]
struct PairStore {
    first: usize,
    len: usize,
    data: Vec<RelationValue>,
}

/// Constant-time view of one pair's relation series.
#[derive(Debug, Clone, Copy)]
pub struct RelationSeries<'a> {
    len: usize,
    u: &'a TagNode,
    v: &'a TagNode,
    store: Option<&'a PairStore>,
    slot: usize,
}

impl<'a> RelationSeries<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<RelationValue> {
        if !(self.u.is_present(i) && self.v.is_present(i)) {
            return None;
        }
        let s = self.store?;
        Some(s.data[self.slot * s.len + (i - s.first)])
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<RelationValue>> + 'a {
        let me = *self;
        (0..self.len).map(move |i| me.get(i))
    }

    pub fn to_vec(&self) -> Vec<Option<RelationValue>> {
        self.iter().collect()
    }

    /// Metric relations as reals; other kinds read as X.
    pub fn reals(&self) -> Vec<Option<f64>> {
        self.iter().map(|v| v.and_then(|v| v.as_real())).collect()
    }
}

/// Constant-time view of one self-loop's position series.
#[derive(Debug, Clone, Copy)]
pub struct PositionSeries<'a> {
    len: usize,
    node: &'a TagNode,
}

impl<'a> PositionSeries<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<BoundingBox> {
        self.node.position(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<BoundingBox>> + 'a {
        let node = self.node;
        (0..self.len).map(move |i| node.position(i))
    }

    pub fn to_vec(&self) -> Vec<Option<BoundingBox>> {
        self.iter().collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EdgeSeries<'a> {
    Position(PositionSeries<'a>),
    Relation(RelationSeries<'a>),
}

/// Reduction in nodes and edges achieved by aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionReport {
    pub vekg_nodes: usize,
    pub tag_nodes: usize,
    pub vekg_edges: usize,
    pub tag_edges: usize,
    pub rin: f64,
    pub rie: f64,
    /// Set when a ratio came out negative (tiny windows) or is undefined
    /// (no per-frame nodes or edges to reduce; reported as 0).
    pub degenerate: bool,
}

/// Time-aggregated graph of one window.
#[derive(Debug, Clone)]
pub struct VekgTag {
    start: i64,
    end: i64,
    timestamps: Vec<i64>,
    frame_indices: Vec<u64>,
    relations: RelationSet,
    /// Sorted by track id.
    nodes: Vec<TagNode>,
    /// `pairs[u]` maps target node index to the (u, target) series.
    pairs: Vec<HashMap<u32, PairStore>>,
}

impl VekgTag {
    pub fn window_bounds(&self) -> (i64, i64) {
        (self.start, self.end)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn frame_indices(&self) -> &[u64] {
        &self.frame_indices
    }

    /// Number of frames `|T|`.
    pub fn frame_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn relations(&self) -> &RelationSet {
        &self.relations
    }

    pub fn nodes(&self) -> &[TagNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Logical edge count: every ordered pair plus one self-loop per node.
    pub fn edge_count(&self) -> usize {
        self.nodes.len() * self.nodes.len()
    }

    /// Pair series actually stored.
    pub fn stored_pair_count(&self) -> usize {
        self.pairs.iter().map(|m| m.len()).sum()
    }

    pub fn node_index(&self, track_id: u64) -> Result<usize, TagError> {
        self.nodes
            .binary_search_by_key(&track_id, |n| n.track_id)
            .map_err(|_| TagError::UnknownNode(track_id))
    }

    pub fn node(&self, track_id: u64) -> Result<&TagNode, TagError> {
        Ok(&self.nodes[self.node_index(track_id)?])
    }

    pub fn track_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.iter().map(|n| n.track_id)
    }

    pub fn nodes_with_label<'a>(&'a self, labels: &'a [String]) -> impl Iterator<Item = &'a TagNode> + 'a {
        self.nodes.iter().filter(move |n| labels.iter().any(|l| l == &n.label))
    }

    pub fn position_series(&self, u: u64) -> Result<PositionSeries<'_>, TagError> {
        let node = self.node(u)?;
        Ok(PositionSeries { len: self.frame_count(), node })
    }

    pub fn relation_series(&self, u: u64, v: u64, relation: Relation) -> Result<RelationSeries<'_>, TagError> {
        let iu = self.node_index(u)?;
        let iv = self.node_index(v)?;
        if iu == iv {
            return Err(TagError::WrongChannel("self-loops carry positions, not relations"));
        }
        let slot = self.relations.index_of(relation).ok_or(TagError::UnknownRelation(relation))?;
        Ok(RelationSeries {
            len: self.frame_count(),
            u: &self.nodes[iu],
            v: &self.nodes[iv],
            store: self.pairs[iu].get(&(iv as u32)),
            slot,
        })
    }

    pub fn edge_series(&self, u: u64, v: u64, channel: Channel) -> Result<EdgeSeries<'_>, TagError> {
        match channel {
            Channel::Position if u == v => self.position_series(u).map(EdgeSeries::Position),
            Channel::Position => {
                self.node_index(u)?;
                self.node_index(v)?;
                Err(TagError::WrongChannel("positions live on self-loops only"))
            }
            Channel::Relation(r) => self.relation_series(u, v, r).map(EdgeSeries::Relation),
        }
    }

    /// Centroid speed in pixels per frame step. X wherever the current or
    /// previous slot is X; element 0 is 0 when present.
    pub fn motion_series(&self, u: u64) -> Result<Vec<Option<f64>>, TagError> {
        Ok(self
            .displacement_series(u)?
            .into_iter()
            .map(|d| d.map(|(dx, dy)| dx.hypot(dy)))
            .collect())
    }

    /// Centroid displacement between consecutive frames; X where either
    /// frame is X; the first element is `(0, 0)` when present.
    pub fn displacement_series(&self, u: u64) -> Result<Vec<Option<(f64, f64)>>, TagError> {
        let node = self.node(u)?;
        let n = self.frame_count();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let cur = node.position(i).map(|b| b.centroid());
            let v = match (i, cur) {
                (_, None) => None,
                (0, Some(_)) => Some((0.0, 0.0)),
                (_, Some(c)) => node.position(i - 1).map(|p| {
                    let p = p.centroid();
                    (c.x - p.x, c.y - p.y)
                }),
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Centroid series of one node.
    pub fn centroid_series(&self, u: u64) -> Result<Vec<Option<Point>>, TagError> {
        Ok(self.position_series(u)?.iter().map(|b| b.map(|b| b.centroid())).collect())
    }

    /// Line-based debug listing: header, node lines, then edge lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let rels: Vec<&str> = self.relations.iter().map(|r| r.name()).collect();
        let _ = writeln!(
            out,
            "tag window=[{},{}) frames={} nodes={} edges={} relations={}",
            self.start,
            self.end,
            self.frame_count(),
            self.node_count(),
            self.edge_count(),
            rels.join(",")
        );
        for n in &self.nodes {
            let _ = writeln!(out, "node {} {} present={}", n.track_id, n.label, n.present_count);
        }
        let x = |o: Option<String>| o.unwrap_or_else(|| "X".to_string());
        for u in &self.nodes {
            for v in &self.nodes {
                if u.track_id == v.track_id {
                    let s = self.position_series(u.track_id).expect("node exists");
                    let cells: Vec<String> =
                        s.iter().map(|b| x(b.map(|b| format!("{},{},{},{}", b.x, b.y, b.w, b.h)))).collect();
                    let _ = writeln!(out, "edge {} {} position {}", u.track_id, v.track_id, cells.join(" "));
                } else {
                    for r in self.relations.iter() {
                        let s = self.relation_series(u.track_id, v.track_id, r).expect("edge exists");
                        let cells: Vec<String> = s.iter().map(|c| x(c.map(|c| c.to_string()))).collect();
                        let _ = writeln!(out, "edge {} {} {} {}", u.track_id, v.track_id, r.name(), cells.join(" "));
                    }
                }
            }
        }
        out
    }
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

/// Folds a window's graphs into one time-aggregated graph carrying exactly
/// `required` relations on its pair edges.
pub fn aggregate(window: &WindowState, required: &RelationSet, exec: Execution) -> Result<VekgTag, TagError> {
    let graphs = &window.graphs;
    let t = graphs.len();

    for g in graphs {
        if !g.relations().is_superset(required) {
            let missing: Vec<&str> =
                required.iter().filter(|r| !g.relations().contains(*r)).map(|r| r.name()).collect();
            return Err(TagError::RelationVocabularyMismatch { frame: g.frame_index(), missing: missing.join(",") });
        }
    }

    // Node union with last-seen label/attributes and extents.
    let mut index: BTreeMap<u64, (usize, usize, usize)> = BTreeMap::new(); // track -> (first, last, last_frame_pos)
    for (i, g) in graphs.iter().enumerate() {
        for (k, o) in g.nodes().iter().enumerate() {
            index
                .entry(o.track_id)
                .and_modify(|e| {
                    e.1 = i;
                    e.2 = k;
                })
                .or_insert((i, i, k));
        }
    }
    let words = t.div_ceil(64);
    let mut nodes: Vec<TagNode> = index
        .iter()
        .map(|(&track_id, &(first, last, k))| {
            let o = &graphs[last].nodes()[k];
            TagNode {
                track_id,
                label: o.label.clone(),
                attributes: o.attributes.clone(),
                first,
                last,
                presence: vec![0; words],
                present_count: 0,
                positions: vec![o.bbox; last - first + 1],
                keypoints: None,
            }
        })
        .collect();
    let node_of: HashMap<u64, usize> = nodes.iter().enumerate().map(|(i, n)| (n.track_id, i)).collect();

    // Per-frame position of each graph node in the TAG node list.
    let frame_nodes: Vec<Vec<usize>> =
        graphs.iter().map(|g| g.nodes().iter().map(|o| node_of[&o.track_id]).collect()).collect();

    for (i, g) in graphs.iter().enumerate() {
        for (k, o) in g.nodes().iter().enumerate() {
            let node = &mut nodes[frame_nodes[i][k]];
            set_bit(&mut node.presence, i);
            node.present_count += 1;
            let off = i - node.first;
            node.positions[off] = o.bbox;
            if let Some(kp) = &o.keypoints {
                let span = node.last - node.first + 1;
                node.keypoints.get_or_insert_with(|| vec![None; span])[off] = Some(*kp);
            }
        }
    }

    // Pair rows, one source node per task.
    let slots: Vec<Vec<usize>> = graphs
        .iter()
        .map(|g| required.iter().map(|r| g.relations().index_of(r).expect("checked superset")).collect())
        .collect();
    let k = required.len();
    let rows: Vec<HashMap<u32, PairStore>> = if k == 0 {
        vec![HashMap::new(); nodes.len()]
    } else {
        let nodes_ref = &nodes;
        let frame_nodes = &frame_nodes;
        let slots = &slots;
        exec.map_range(nodes.len(), move |u| {
            let nu = &nodes_ref[u];
            let mut row: HashMap<u32, PairStore> = HashMap::new();
            for i in nu.first..=nu.last {
                if !nu.is_present(i) {
                    continue;
                }
                let g = &graphs[i];
                let fi = frame_nodes[i].iter().position(|&x| x == u).expect("present node in frame");
                for (j, &v) in frame_nodes[i].iter().enumerate() {
                    if j == fi {
                        continue;
                    }
                    let edge = g.edge_at(fi, j).expect("distinct in-range nodes");
                    let store = row.entry(v as u32).or_insert_with(|| {
                        let nv = &nodes_ref[v];
                        let first = nu.first.max(nv.first);
                        let len = nu.last.min(nv.last) - first + 1;
                        PairStore { first, len, data: vec![RelationValue::Bool(false); len * k] }
                    });
                    let off = i - store.first;
                    let vals = edge.values();
                    for (s, &gs) in slots[i].iter().enumerate() {
                        store.data[s * store.len + off] = vals[gs];
                    }
                }
            }
            row
        })
    };

    Ok(VekgTag {
        start: window.start,
        end: window.end,
        timestamps: graphs.iter().map(|g| g.timestamp()).collect(),
        frame_indices: graphs.iter().map(|g| g.frame_index()).collect(),
        relations: required.clone(),
        nodes,
        pairs: rows,
    })
}

/// Node and edge reduction of `tag` relative to the window's graph stream.
pub fn reduction_report(window: &WindowState, tag: &VekgTag) -> ReductionReport {
    let vekg_nodes: usize = window.graphs.iter().map(|g| g.node_count()).sum();
    let vekg_edges: usize = window.graphs.iter().map(|g| g.edge_count()).sum();
    let tag_nodes = tag.node_count();
    let tag_edges = tag.edge_count();
    let ratio = |before: usize, after: usize| {
        if before == 0 {
            0.0
        } else {
            (before as f64 - after as f64) / before as f64
        }
    };
    let rin = ratio(vekg_nodes, tag_nodes);
    let rie = ratio(vekg_edges, tag_edges);
    let degenerate =
        rin < 0.0 || rie < 0.0 || (vekg_nodes == 0 && tag_nodes > 0) || (vekg_edges == 0 && tag_edges > 0);
    ReductionReport { vekg_nodes, tag_nodes, vekg_edges, tag_edges, rin, rie, degenerate }
}

/// Distance between two optional points; X if either is X.
pub fn keypoint_distance(a: Option<Point>, b: Option<Point>) -> Option<f64> {
    Some(point_distance(a?, b?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::centroid_distance;
    use crate::ingest::{FrameDetections, ObjectNode};
    use crate::vekg::build_frame_graph;
    use crate::windowing::WindowState;
    use std::sync::Arc;

    fn window(frames: Vec<Vec<(u64, BoundingBox)>>, rels: &RelationSet) -> WindowState {
        let graphs = frames
            .into_iter()
            .enumerate()
            .map(|(i, objs)| {
                let f = FrameDetections::new(
                    i as u64,
                    i as i64 * 40,
                    objs.into_iter().map(|(id, b)| ObjectNode::new(id, "car", b)).collect(),
                );
                Arc::new(build_frame_graph(&f, rels))
            })
            .collect();
        WindowState { index: 0, start: 0, end: 1000, graphs }
    }

    fn b(x: f64, y: f64) -> BoundingBox {
        BoundingBox::new(x, y, 10., 10.)
    }

    fn three_car_window() -> WindowState {
        let rels = RelationSet::new([Relation::Distance]);
        window(
            vec![
                vec![(1, b(0., 0.)), (2, b(30., 0.)), (3, b(60., 40.))],
                vec![(1, b(3., 4.)), (2, b(30., 0.)), (3, b(61., 40.))],
                vec![(1, b(6., 8.)), (2, b(30., 0.))],
            ],
            &rels,
        )
    }

    #[test]
    fn aggregate_fills_dont_care() {
        let w = three_car_window();
        let rels = RelationSet::new([Relation::Distance]);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let tag = aggregate(&w, &rels, exec).unwrap();
            assert_eq!(tag.node_count(), 3);
            assert_eq!(tag.edge_count(), 9);
            let s = tag.relation_series(2, 3, Relation::Distance).unwrap().reals();
            assert_eq!(s.len(), 3);
            assert_eq!(s[0], Some(centroid_distance(&b(30., 0.), &b(60., 40.))));
            assert_eq!(s[1], Some(centroid_distance(&b(30., 0.), &b(61., 40.))));
            assert_eq!(s[2], None);
            let d12 = tag.relation_series(1, 2, Relation::Distance).unwrap().reals();
            assert!(d12.iter().all(Option::is_some));
            let p3 = tag.position_series(3).unwrap().to_vec();
            assert_eq!(p3, vec![Some(b(60., 40.)), Some(b(61., 40.)), None]);
        }
    }

    #[test]
    fn lookup_errors() {
        let tag = aggregate(&three_car_window(), &RelationSet::new([Relation::Distance]), Execution::Sequential).unwrap();
        assert_eq!(tag.relation_series(1, 9, Relation::Distance).unwrap_err(), TagError::UnknownNode(9));
        assert_eq!(
            tag.relation_series(1, 2, Relation::Iou).unwrap_err(),
            TagError::UnknownRelation(Relation::Iou)
        );
        assert!(matches!(tag.edge_series(3, 3, Channel::Position), Ok(EdgeSeries::Position(_))));
    }

    #[test]
    fn vocabulary_mismatch() {
        let w = three_car_window();
        let err = aggregate(&w, &RelationSet::new([Relation::Iou]), Execution::Sequential).unwrap_err();
        assert!(matches!(err, TagError::RelationVocabularyMismatch { frame: 0, .. }));
    }

    #[test]
    fn single_and_empty_windows() {
        let rels = RelationSet::new([Relation::Distance]);
        let w = window(vec![vec![(4, b(0., 0.))]], &rels);
        let tag = aggregate(&w, &rels, Execution::Sequential).unwrap();
        assert_eq!((tag.node_count(), tag.edge_count(), tag.frame_count()), (1, 1, 1));
        let empty = WindowState { index: 0, start: 0, end: 10, graphs: vec![] };
        let tag = aggregate(&empty, &rels, Execution::Sequential).unwrap();
        assert_eq!((tag.node_count(), tag.edge_count()), (0, 0));
        assert_eq!(reduction_report(&empty, &tag).rin, 0.0);
    }

    #[test]
    fn motion_examples() {
        let rels = RelationSet::empty();
        let w = window(vec![vec![(1, b(0., 0.))], vec![(1, b(3., 4.))]], &rels);
        let tag = aggregate(&w, &rels, Execution::Sequential).unwrap();
        assert_eq!(tag.motion_series(1).unwrap(), vec![Some(0.0), Some(5.0)]);

        let w = window(vec![vec![(1, b(0., 0.))], vec![], vec![(1, b(0., 0.))]], &rels);
        let tag = aggregate(&w, &rels, Execution::Sequential).unwrap();
        assert_eq!(tag.motion_series(1).unwrap(), vec![Some(0.0), None, None]);
        assert_eq!(tag.motion_series(7).unwrap_err(), TagError::UnknownNode(7));
    }

    #[test]
    fn degenerate_single_frame_reduction() {
        let rels = RelationSet::empty();
        let w = window(vec![vec![(1, b(0., 0.)), (2, b(20., 0.)), (3, b(40., 0.))]], &rels);
        let tag = aggregate(&w, &rels, Execution::Sequential).unwrap();
        let r = reduction_report(&w, &tag);
        assert_eq!((r.vekg_edges, r.tag_edges), (6, 9));
        assert_eq!(r.rin, 0.0);
        assert!((r.rie - (-3.0 / 6.0)).abs() < 1e-15);
        assert!(r.degenerate);
    }

    #[test]
    fn persistent_objects_reduction() {
        let rels = RelationSet::empty();
        let frames: Vec<Vec<(u64, BoundingBox)>> =
            (0..1800).map(|_| (0..5).map(|k| (k, b(k as f64 * 20., 0.))).collect()).collect();
        let w = window(frames, &rels);
        let tag = aggregate(&w, &rels, Execution::Parallel).unwrap();
        let r = reduction_report(&w, &tag);
        assert_eq!((r.vekg_nodes, r.tag_nodes), (9000, 5));
        assert!((r.rin - 8995.0 / 9000.0).abs() < 1e-15);
    }

    #[test]
    fn dump_marks_dont_care() {
        let tag = aggregate(&three_car_window(), &RelationSet::new([Relation::Distance]), Execution::Sequential).unwrap();
        let d = tag.dump();
        assert!(d.starts_with("tag window=[0,1000) frames=3 nodes=3 edges=9"));
        assert!(d.lines().any(|l| l.starts_with("edge 3 3 position") && l.ends_with(" X")));
    }
}
