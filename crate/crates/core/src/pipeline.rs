//! Streaming matcher: graph builder → window aggregator → rule matcher,
//! three workers connected by bounded queues.
//!
//! Notifications are released in [`notification_order`] as soon as no
//! later input can produce one that sorts before them, so output bytes do
//! not depend on thread timing.

use std::collections::HashSet;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::{FrameDetections, LineError};
use crate::metrics::LatencyReport;
use crate::rules::{notification_order, MatchNotification, RuleError, RuleSet};
use crate::tag::{aggregate, reduction_report, ReductionReport, VekgTag};
use crate::vekg::{build_frame_graph, RelationSet, VekgGraph};
use crate::windowing::{WindowError, WindowState, Windower};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Input(#[from] LineError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
    #[error("pipeline worker failed: {0}")]
    Worker(String),
}

/// Per-window measurements of one window-length group.
#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    pub window_ms: i64,
    pub start: i64,
    pub end: i64,
    pub frames: usize,
    pub latency: LatencyReport,
    pub reduction: ReductionReport,
}

impl WindowReport {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub frames: usize,
    pub notifications: usize,
    pub windows: Vec<WindowReport>,
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub exec: Execution,
    /// Capacity of each inter-stage queue.
    pub queue_depth: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { exec: Execution::default(), queue_depth: 64 }
    }
}

struct Built {
    graph: Arc<VekgGraph>,
    build: Duration,
    stateless: Vec<MatchNotification>,
}

enum FromBuilder {
    Frame(Built),
    /// Clean end of input; open windows may be flushed.
    End,
}

enum ToMatcher {
    Window { group: usize, state: WindowState, tag: VekgTag, build: Duration, aggregate: Duration },
    Stateless(Vec<MatchNotification>),
    /// No notification starting before this timestamp can still arrive.
    Watermark(i64),
}

/// Runs the rules over a frame stream, calling `sink` for every
/// notification in release order.
///
/// On an input error, windows closed before the bad line are still matched
/// and their notifications emitted; the open window is dropped and the
/// error returned.
pub fn run_stream<I, F>(
    frames: I,
    rules: &RuleSet,
    options: PipelineOptions,
    mut sink: F,
) -> Result<RunSummary, PipelineError>
where
    I: Iterator<Item = Result<FrameDetections, LineError>>,
    F: FnMut(&MatchNotification) -> std::io::Result<()> + Send,
{
    let groups: Vec<(i64, Vec<usize>)> = rules.window_groups().into_iter().collect();
    let relations: Vec<RelationSet> = groups.iter().map(|(_, idx)| rules.required_relations(idx)).collect();
    let all_relations = relations.iter().fold(RelationSet::empty(), |a, r| a.union(r));
    let mut windowers = groups.iter().map(|(len, _)| Windower::new(*len)).collect::<Result<Vec<_>, _>>()?;
    let exec = options.exec;
    let depth = options.queue_depth.max(1);

    thread::scope(|scope| {
        let (built_tx, built_rx) = sync_channel::<FromBuilder>(depth);
        let (match_tx, match_rx) = sync_channel::<ToMatcher>(depth);

        let groups_ref = &groups;
        let relations_ref = &relations;
        let aggregator =
            scope.spawn(move || aggregate_stage(built_rx, match_tx, &mut windowers, relations_ref, exec));
        let matcher = scope.spawn(move || match_stage(match_rx, rules, groups_ref, exec, &mut sink));

        let (frame_count, input_error) = build_stage(frames, rules, &all_relations, built_tx);

        let agg = aggregator.join().map_err(|_| PipelineError::Worker("aggregator panicked".into()))?;
        let matched = matcher.join().map_err(|_| PipelineError::Worker("matcher panicked".into()))?;
        agg?;
        let (notifications, windows) = matched?;
        if let Some(e) = input_error {
            return Err(PipelineError::Input(e));
        }
        Ok(RunSummary { frames: frame_count, notifications, windows })
    })
}

/// Reads and builds graphs on the calling thread. Returns the number of
/// frames accepted and the input error that stopped the stream, if any.
fn build_stage<I>(
    frames: I,
    rules: &RuleSet,
    relations: &RelationSet,
    tx: SyncSender<FromBuilder>,
) -> (usize, Option<LineError>)
where
    I: Iterator<Item = Result<FrameDetections, LineError>>,
{
    let stateless: Vec<_> = rules.stateless().collect();
    let mut seen: Vec<HashSet<u64>> = vec![HashSet::new(); stateless.len()];
    let mut count = 0;
    for item in frames {
        let frame = match item {
            Ok(f) => f,
            Err(e) => return (count, Some(e)),
        };
        let t0 = Instant::now();
        let graph = Arc::new(build_frame_graph(&frame, relations));
        let build = t0.elapsed();
        let notes = stateless.iter().zip(seen.iter_mut()).flat_map(|(r, s)| r.evaluate_frame(&frame, s)).collect();
        count += 1;
        if tx.send(FromBuilder::Frame(Built { graph, build, stateless: notes })).is_err() {
            return (count, None);
        }
    }
    let _ = tx.send(FromBuilder::End);
    (count, None)
}

fn aggregate_stage(
    rx: Receiver<FromBuilder>,
    tx: SyncSender<ToMatcher>,
    windowers: &mut [Windower],
    relations: &[RelationSet],
    exec: Execution,
) -> Result<(), PipelineError> {
    let mut build_sums = vec![Duration::ZERO; windowers.len()];
    let emit = |group: usize, state: WindowState, build: Duration| -> Result<bool, PipelineError> {
        let t0 = Instant::now();
        let tag = aggregate(&state, &relations[group], exec)
            .map_err(|e| PipelineError::Worker(format!("aggregation: {e}")))?;
        let aggregate = t0.elapsed();
        Ok(tx.send(ToMatcher::Window { group, state, tag, build, aggregate }).is_ok())
    };
    for msg in rx.iter() {
        let built = match msg {
            FromBuilder::Frame(b) => b,
            FromBuilder::End => {
                for (g, w) in windowers.iter_mut().enumerate() {
                    if let Some(state) = w.finish() {
                        emit(g, state, std::mem::take(&mut build_sums[g]))?;
                    }
                }
                return Ok(());
            }
        };
        let ts = built.graph.timestamp();
        for (g, w) in windowers.iter_mut().enumerate() {
            for state in w.push(built.graph.clone())? {
                if !emit(g, state, std::mem::take(&mut build_sums[g]))? {
                    return Ok(());
                }
            }
            build_sums[g] += built.build;
        }
        if !built.stateless.is_empty() && tx.send(ToMatcher::Stateless(built.stateless)).is_err() {
            return Ok(());
        }
        let mark = windowers.iter().filter_map(|w| w.open_start()).fold(ts, i64::min);
        if tx.send(ToMatcher::Watermark(mark)).is_err() {
            return Ok(());
        }
    }
    // Queue closed without an end marker: the input failed, so the open
    // windows are incomplete and dropped.
    Ok(())
}

type MatchResult = (usize, Vec<WindowReport>);

fn match_stage<F>(
    rx: Receiver<ToMatcher>,
    rules: &RuleSet,
    groups: &[(i64, Vec<usize>)],
    exec: Execution,
    sink: &mut F,
) -> Result<MatchResult, PipelineError>
where
    F: FnMut(&MatchNotification) -> std::io::Result<()>,
{
    let mut pending: Vec<MatchNotification> = Vec::new();
    let mut emitted = 0;
    let mut reports = Vec::new();
    let mut release = |pending: &mut Vec<MatchNotification>, before: Option<i64>| -> std::io::Result<usize> {
        pending.sort_by(notification_order);
        let cut = match before {
            Some(w) => pending.partition_point(|n| n.interval.start < w),
            None => pending.len(),
        };
        for n in pending.drain(..cut) {
            sink(&n)?;
        }
        Ok(cut)
    };
    for msg in rx.iter() {
        match msg {
            ToMatcher::Window { group, state, tag, build, aggregate } => {
                let t0 = Instant::now();
                let notes = rules.evaluate_tag(&groups[group].1, &tag, exec);
                let search = t0.elapsed();
                reports.push(WindowReport {
                    window_ms: groups[group].0,
                    start: state.start,
                    end: state.end,
                    frames: state.graphs.len(),
                    latency: LatencyReport::new(state.index, build, aggregate, search),
                    reduction: reduction_report(&state, &tag),
                });
                pending.extend(notes);
            }
            ToMatcher::Stateless(notes) => pending.extend(notes),
            ToMatcher::Watermark(w) => emitted += release(&mut pending, Some(w))?,
        }
    }
    emitted += release(&mut pending, None)?;
    Ok((emitted, reports))
}
