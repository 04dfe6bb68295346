//! Tumbling time windows over a graph stream.
//!
//! Windows are aligned to the first observed timestamp and are left-closed,
//! right-open. A window is emitted once a graph at or past its end arrives,
//! or when the stream ends; windows with no graphs in between are emitted
//! empty so that absence-of-object rules still see them.

use std::sync::Arc;

use thiserror::Error;

use crate::vekg::VekgGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WindowError {
    #[error("window length must be positive, got {0} ms")]
    NonPositiveLength(i64),
    #[error("graph at {got} ms arrived before open window start {start} ms")]
    OutOfOrder { start: i64, got: i64 },
}

/// One emitted window: bounds plus the graphs that fell inside them.
#[derive(Debug, Clone)]
pub struct WindowState {
    pub index: u64,
    pub start: i64,
    pub end: i64,
    pub graphs: Vec<Arc<VekgGraph>>,
}

impl WindowState {
    pub fn len_ms(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.graphs.iter().map(|g| g.timestamp()).collect()
    }
}

/// Push-based tumbling windower.
#[derive(Debug)]
pub struct Windower {
    length: i64,
    origin: Option<i64>,
    current: Option<WindowState>,
}

impl Windower {
    pub fn new(length_ms: i64) -> Result<Self, WindowError> {
        if length_ms <= 0 {
            return Err(WindowError::NonPositiveLength(length_ms));
        }
        Ok(Self { length: length_ms, origin: None, current: None })
    }

    pub fn length_ms(&self) -> i64 {
        self.length
    }

    /// Start of the currently open window, if any.
    pub fn open_start(&self) -> Option<i64> {
        self.current.as_ref().map(|w| w.start)
    }

    fn fresh(&self, index: u64) -> WindowState {
        let origin = self.origin.expect("origin set");
        let start = origin + index as i64 * self.length;
        WindowState { index, start, end: start + self.length, graphs: Vec::new() }
    }

    /// Adds a graph; returns every window closed by its arrival, in order.
    pub fn push(&mut self, graph: Arc<VekgGraph>) -> Result<Vec<WindowState>, WindowError> {
        let ts = graph.timestamp();
        if self.origin.is_none() {
            self.origin = Some(ts);
            self.current = Some(self.fresh(0));
        }
        let mut closed = Vec::new();
        loop {
            let cur = self.current.as_ref().expect("open window");
            if ts < cur.start {
                return Err(WindowError::OutOfOrder { start: cur.start, got: ts });
            }
            if ts < cur.end {
                break;
            }
            let next = self.fresh(cur.index + 1);
            closed.push(self.current.replace(next).expect("open window"));
        }
        self.current.as_mut().expect("open window").graphs.push(graph);
        Ok(closed)
    }

    /// Flushes the open window at end of stream.
    pub fn finish(&mut self) -> Option<WindowState> {
        self.current.take()
    }
}

/// Cuts a graph iterator into tumbling windows of `length_ms`.
pub fn time_window<I>(graphs: I, length_ms: i64) -> Result<TimeWindows<I::IntoIter>, WindowError>
where
    I: IntoIterator<Item = Arc<VekgGraph>>,
{
    Ok(TimeWindows {
        inner: graphs.into_iter(),
        windower: Windower::new(length_ms)?,
        pending: std::collections::VecDeque::new(),
        done: false,
    })
}

/// Iterator returned by [`time_window`].
pub struct TimeWindows<I> {
    inner: I,
    windower: Windower,
    pending: std::collections::VecDeque<WindowState>,
    done: bool,
}

impl<I: Iterator<Item = Arc<VekgGraph>>> Iterator for TimeWindows<I> {
    type Item = Result<WindowState, WindowError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(w) = self.pending.pop_front() {
                return Some(Ok(w));
            }
            if self.done {
                return None;
            }
            match self.inner.next() {
                Some(g) => match self.windower.push(g) {
                    Ok(closed) => self.pending.extend(closed),
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                },
                None => {
                    self.done = true;
                    self.pending.extend(self.windower.finish());
                }
            }
        }
    }
}
