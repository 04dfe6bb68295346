//! Video event knowledge graphs over object-detection streams.
//!
//! Detection records are parsed by [`ingest`], turned into per-frame complete
//! directed graphs by [`vekg`], cut into tumbling time windows by
//! [`windowing`] and folded into one time-aggregated graph per window by
//! [`tag`]. The event rules in [`rules`] are evaluated against the aggregated
//! graph; [`metrics`] scores matches and decomposes latency, and [`synth`]
//! produces scripted streams with planted ground truth.
//!
//! Data-parallel inner loops go through [`exec::Execution`], which uses rayon
//! when the `parallel` feature is enabled and falls back to plain iterators
//! otherwise.

pub mod cli;
pub mod exec;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod rules;
pub mod search;
pub mod synth;
pub mod tag;
pub mod temporal;
pub mod vekg;
pub mod windowing;

pub use exec::Execution;
pub use geometry::{BoundingBox, DirectionClass, Point, Region, SpatialRelationClass};
pub use ingest::{FrameDetections, ObjectNode};
pub use rules::{EventRule, MatchNotification, RuleKind, RuleSet};
pub use tag::VekgTag;
pub use temporal::{AllenRelation, Interval};
pub use vekg::{Relation, RelationSet, VekgGraph};
pub use windowing::WindowState;
