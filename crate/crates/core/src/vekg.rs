//! Per-frame video event knowledge graphs.
//!
//! A [`VekgGraph`] is the complete directed graph over the objects of one
//! frame. Nodes are keyed by track id; every ordered pair of distinct nodes
//! carries an [`EdgeValue`] with one slot per materialized [`Relation`].
//! Relations are materialized lazily: only those requested when the graph is
//! built are evaluated.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BoundingBox, DirectionClass, SpatialRelationClass, TopologySet};
use crate::ingest::{FrameDetections, ObjectNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VekgError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
}

/// Output kind of a relation operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Boolean,
    Metric,
    Class,
}

/// Pairwise spatial relation that can be materialized on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Centroid distance in pixels.
    Distance,
    /// Full topological class set.
    Topology,
    /// Four-sector direction of the source relative to the target.
    Direction,
    /// Boolean: interiors overlap without containment.
    Overlap,
    /// Fraction of the source box covered by the target box.
    OverlapRatio,
    /// Intersection over union.
    Iou,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Distance,
        Relation::Topology,
        Relation::Direction,
        Relation::Overlap,
        Relation::OverlapRatio,
        Relation::Iou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Distance => "distance",
            Relation::Topology => "topology",
            Relation::Direction => "direction",
            Relation::Overlap => "overlap",
            Relation::OverlapRatio => "overlap_ratio",
            Relation::Iou => "iou",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, VekgError> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| VekgError::UnknownRelation(name.to_string()))
    }

    pub fn kind(self) -> RelationKind {
        match self {
            Relation::Distance | Relation::OverlapRatio | Relation::Iou => RelationKind::Metric,
            Relation::Overlap => RelationKind::Boolean,
            Relation::Topology | Relation::Direction => RelationKind::Class,
        }
    }

    pub fn evaluate(self, a: &BoundingBox, b: &BoundingBox) -> RelationValue {
        match self {
            Relation::Distance => RelationValue::Real(geometry::centroid_distance(a, b)),
            Relation::Topology => RelationValue::Topology(geometry::topology(a, b)),
            Relation::Direction => RelationValue::Direction(geometry::direction(a, b).ok()),
            Relation::Overlap => {
                RelationValue::Bool(geometry::topology(a, b).contains(SpatialRelationClass::Overlap))
            }
            Relation::OverlapRatio => RelationValue::Real(geometry::overlap_ratio(a, b)),
            Relation::Iou => RelationValue::Real(geometry::iou(a, b)),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One relation slot on an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelationValue {
    Bool(bool),
    Real(f64),
    Topology(TopologySet),
    /// `None` when the two centroids coincide.
    Direction(Option<DirectionClass>),
}

impl RelationValue {
    pub fn kind(&self) -> RelationKind {
        match self {
            RelationValue::Bool(_) => RelationKind::Boolean,
            RelationValue::Real(_) => RelationKind::Metric,
            RelationValue::Topology(_) | RelationValue::Direction(_) => RelationKind::Class,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match *self {
            RelationValue::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            RelationValue::Bool(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_topology(&self) -> Option<TopologySet> {
        match *self {
            RelationValue::Topology(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_direction(&self) -> Option<DirectionClass> {
        match *self {
            RelationValue::Direction(v) => v,
            _ => None,
        }
    }
}

impl fmt::Display for RelationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationValue::Bool(b) => write!(f, "{b}"),
            RelationValue::Real(v) => write!(f, "{v}"),
            RelationValue::Topology(t) => write!(f, "{t}"),
            RelationValue::Direction(Some(d)) => f.write_str(d.name()),
            RelationValue::Direction(None) => f.write_str("none"),
        }
    }
}

/// Ordered, duplicate-free set of relations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct RelationSet(Vec<Relation>);

impl RelationSet {
    pub fn new(relations: impl IntoIterator<Item = Relation>) -> Self {
        let mut v: Vec<Relation> = relations.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, VekgError> {
        let rels = names
            .iter()
            .map(|n| Relation::from_name(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(rels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, r: Relation) -> bool {
        self.0.binary_search(&r).is_ok()
    }

    pub fn index_of(&self, r: Relation) -> Option<usize> {
        self.0.binary_search(&r).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = Relation> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[Relation] {
        &self.0
    }

    pub fn union(&self, other: &RelationSet) -> RelationSet {
        RelationSet::new(self.iter().chain(other.iter()))
    }

    pub fn is_superset(&self, other: &RelationSet) -> bool {
        other.iter().all(|r| self.contains(r))
    }
}

impl FromIterator<Relation> for RelationSet {
    fn from_iter<I: IntoIterator<Item = Relation>>(iter: I) -> Self {
        RelationSet::new(iter)
    }
}

/// Borrowed view of the relation slots on one edge.
#[derive(Debug, Clone, Copy)]
pub struct EdgeValue<'a> {
    relations: &'a RelationSet,
    values: &'a [RelationValue],
}

impl<'a> EdgeValue<'a> {
    pub fn get(&self, r: Relation) -> Option<RelationValue> {
        self.relations.index_of(r).map(|i| self.values[i])
    }

    pub fn values(&self) -> &'a [RelationValue] {
        self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (Relation, RelationValue)> + 'a {
        self.relations.as_slice().iter().copied().zip(self.values.iter().copied())
    }
}

/// Complete directed labeled graph over the objects of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VekgGraph {
    frame_index: u64,
    timestamp: i64,
    /// Sorted by track id.
    nodes: Vec<ObjectNode>,
    relations: RelationSet,
    /// Row-major over (source, target) node indices with the diagonal
    /// skipped; `relations.len()` slots per edge.
    values: Vec<RelationValue>,
}

impl VekgGraph {
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1)
    }

    pub fn relations(&self) -> &RelationSet {
        &self.relations
    }

    pub fn node_index(&self, track_id: u64) -> Option<usize> {
        self.nodes.binary_search_by_key(&track_id, |o| o.track_id).ok()
    }

    pub fn node(&self, track_id: u64) -> Option<&ObjectNode> {
        self.node_index(track_id).map(|i| &self.nodes[i])
    }

    fn edge_slot(&self, i: usize, j: usize) -> usize {
        let n = self.nodes.len();
        i * (n - 1) + if j < i { j } else { j - 1 }
    }

    /// Edge by node indices; `None` on the diagonal or out of range.
    pub fn edge_at(&self, i: usize, j: usize) -> Option<EdgeValue<'_>> {
        let n = self.nodes.len();
        if i == j || i >= n || j >= n {
            return None;
        }
        let k = self.relations.len();
        let slot = self.edge_slot(i, j);
        Some(EdgeValue { relations: &self.relations, values: &self.values[slot * k..(slot + 1) * k] })
    }

    pub fn edge(&self, source: u64, target: u64) -> Option<EdgeValue<'_>> {
        self.edge_at(self.node_index(source)?, self.node_index(target)?)
    }

    /// All edges in row-major (source, target) order.
    pub fn edges(&self) -> impl Iterator<Item = ((u64, u64), EdgeValue<'_>)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| {
            (0..n).filter(move |&j| j != i).map(move |j| {
                ((self.nodes[i].track_id, self.nodes[j].track_id), self.edge_at(i, j).expect("in range"))
            })
        })
    }

    /// Line-based adjacency listing: a header, node lines, then edge lines.
    pub fn adjacency_dump(&self) -> String {
        let mut out = String::new();
        let rels: Vec<&str> = self.relations.iter().map(|r| r.name()).collect();
        let _ = writeln!(
            out,
            "graph frame={} ts_ms={} nodes={} edges={} relations={}",
            self.frame_index,
            self.timestamp,
            self.node_count(),
            self.edge_count(),
            rels.join(",")
        );
        for o in &self.nodes {
            let b = o.bbox;
            let _ = writeln!(
                out,
                "node {} {} conf={} bbox={},{},{},{}",
                o.track_id, o.label, o.confidence, b.x, b.y, b.w, b.h
            );
        }
        for ((u, v), e) in self.edges() {
            let _ = write!(out, "edge {u} {v}");
            for (r, val) in e.iter() {
                let _ = write!(out, " {}={}", r.name(), val);
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the graph of one frame, evaluating exactly `relations` on every
/// ordered pair of distinct objects.
pub fn build_frame_graph(frame: &FrameDetections, relations: &RelationSet) -> VekgGraph {
    let mut nodes = frame.objects.clone();
    nodes.sort_by_key(|o| o.track_id);
    let n = nodes.len();
    let mut values = Vec::with_capacity(n * n.saturating_sub(1) * relations.len());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for r in relations.iter() {
                values.push(r.evaluate(&nodes[i].bbox, &nodes[j].bbox));
            }
        }
    }
    VekgGraph {
        frame_index: frame.frame_index,
        timestamp: frame.timestamp,
        nodes,
        relations: relations.clone(),
        values,
    }
}

/// Maps a frame stream to a graph stream, preserving order and timestamps.
pub fn stream_graphs<I>(frames: I, relations: &RelationSet) -> impl Iterator<Item = Arc<VekgGraph>> + '_
where
    I: IntoIterator<Item = FrameDetections>,
    I::IntoIter: 'static,
{
    frames.into_iter().map(move |f| Arc::new(build_frame_graph(&f, relations)))
}
