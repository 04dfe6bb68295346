//! Temporal calculus: Allen's interval relations, trend classification of
//! series with don't-care slots, and PELT change-point detection.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemporalError {
    #[error("invalid interval [{start}, {end})")]
    InvalidInterval { start: i64, end: i64 },
    #[error("series of length {0} is too short for change-point detection")]
    SeriesTooShort(usize),
    #[error("penalty must be finite and non-negative, got {0}")]
    InvalidPenalty(f64),
    #[error("series contains a non-finite value at {0}")]
    NonFinite(usize),
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[i64; 2]")]
pub struct Interval {
    pub start: i64,
    pub end: i64,
}

impl Interval {
    pub fn new(start: i64, end: i64) -> Result<Self, TemporalError> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(TemporalError::InvalidInterval { start, end })
        }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersection_len(&self, other: &Interval) -> i64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0)
    }

    /// Temporal intersection over union.
    pub fn iou(&self, other: &Interval) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

impl TryFrom<[i64; 2]> for Interval {
    type Error = TemporalError;
    fn try_from(v: [i64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [i64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AllenRelation {
    Before,
    Meets,
    Overlaps,
    Starts,
    During,
    Finishes,
    Equals,
    After,
    MetBy,
    OverlappedBy,
    StartedBy,
    Contains,
    FinishedBy,
}

impl AllenRelation {
    pub const ALL: [AllenRelation; 13] = [
        AllenRelation::Before,
        AllenRelation::Meets,
        AllenRelation::Overlaps,
        AllenRelation::Starts,
        AllenRelation::During,
        AllenRelation::Finishes,
        AllenRelation::Equals,
        AllenRelation::After,
        AllenRelation::MetBy,
        AllenRelation::OverlappedBy,
        AllenRelation::StartedBy,
        AllenRelation::Contains,
        AllenRelation::FinishedBy,
    ];

    pub fn converse(self) -> Self {
        use AllenRelation::*;
        match self {
            Before => After,
            After => Before,
            Meets => MetBy,
            MetBy => Meets,
            Overlaps => OverlappedBy,
            OverlappedBy => Overlaps,
            Starts => StartedBy,
            StartedBy => Starts,
            During => Contains,
            Contains => During,
            Finishes => FinishedBy,
            FinishedBy => Finishes,
            Equals => Equals,
        }
    }
}

/// Relation of `a` to `b`.
pub fn allen(a: Interval, b: Interval) -> AllenRelation {
    use std::cmp::Ordering::*;
    use AllenRelation::*;
    if a.end < b.start {
        return Before;
    }
    if a.end == b.start {
        return Meets;
    }
    if b.end < a.start {
        return After;
    }
    if b.end == a.start {
        return MetBy;
    }
    // The intervals share interior points from here on.
    match (a.start.cmp(&b.start), a.end.cmp(&b.end)) {
        (Equal, Equal) => Equals,
        (Equal, Less) => Starts,
        (Equal, Greater) => StartedBy,
        (Greater, Equal) => Finishes,
        (Less, Equal) => FinishedBy,
        (Greater, Less) => During,
        (Less, Greater) => Contains,
        (Less, Less) => Overlaps,
        (Greater, Greater) => OverlappedBy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Undetermined,
}

/// Least-squares slope of the non-X samples against their index.
/// `None` with fewer than two samples.
pub fn slope(series: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        series.iter().enumerate().filter_map(|(i, v)| v.map(|y| (i as f64, y))).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Some(sxy / sxx)
}

/// Classifies the slope of `series[span]`, skipping X slots.
///
/// `epsilon` defaults to 1% of the value range inside the span. The span is
/// clamped to the series.
pub fn trend(series: &[Option<f64>], span: Interval, epsilon: Option<f64>) -> Trend {
    let lo = span.start.clamp(0, series.len() as i64) as usize;
    let hi = span.end.clamp(0, series.len() as i64) as usize;
    let window = &series[lo..hi];
    let values: Vec<f64> = window.iter().flatten().copied().collect();
    if values.len() < 3 {
        return Trend::Undetermined;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Trend::Flat;
    }
    let eps = epsilon.unwrap_or(0.01 * (max - min));
    let s = slope(window).expect("at least three samples");
    if s > eps {
        Trend::Increasing
    } else if s < -eps {
        Trend::Decreasing
    } else {
        Trend::Flat
    }
}

/// Default penalty `2 σ² ln n` from the global standard deviation.
pub fn default_penalty(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    2.0 * var * (n as f64).ln()
}

struct SseCost {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl SseCost {
    fn new(series: &[f64]) -> Self {
        // Centring keeps the prefix sums small and the subtraction stable.
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let mut s1 = Vec::with_capacity(series.len() + 1);
        let mut s2 = Vec::with_capacity(series.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        for v in series {
            let c = v - mean;
            s1.push(s1.last().unwrap() + c);
            s2.push(s2.last().unwrap() + c * c);
        }
        Self { s1, s2 }
    }

    /// Cost of the segment `series[a..b]`.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let len = (b - a) as f64;
        let s = self.s1[b] - self.s1[a];
        (self.s2[b] - self.s2[a] - s * s / len).max(0.0)
    }
}

/// Sum of squared deviations from the mean.
pub fn segment_cost(segment: &[f64]) -> f64 {
    if segment.is_empty() {
        return 0.0;
    }
    let mean = segment.iter().sum::<f64>() / segment.len() as f64;
    segment.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Penalised SSE segmentation by PELT.
///
/// Returns the indices that start a new segment, strictly increasing.
pub fn pelt_changepoints(series: &[f64], penalty: f64) -> Result<Vec<usize>, TemporalError> {
    let n = series.len();
    if n < 2 {
        return Err(TemporalError::SeriesTooShort(n));
    }
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(TemporalError::InvalidPenalty(penalty));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(TemporalError::NonFinite(i));
    }
    let cost = SseCost::new(series);
    // Rounding slack for the pruning test only; the argmin itself is exact
    // up to floating-point evaluation of the same expressions.
    let scale = cost.s2[n].abs().max(1.0);
    let tol = 1e-9 * scale;

    let mut f = vec![0.0f64; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -penalty;
    let mut candidates: Vec<usize> = vec![0];
    let mut scores: Vec<f64> = Vec::with_capacity(n);
    for t in 1..=n {
        scores.clear();
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for &s in &candidates {
            let v = f[s] + cost.cost(s, t) + penalty;
            scores.push(v - penalty);
            if v < best {
                best = v;
                arg = s;
            }
        }
        f[t] = best;
        last[t] = arg;
        let mut kept = Vec::with_capacity(candidates.len() + 1);
        for (&s, &sc) in candidates.iter().zip(&scores) {
            if sc <= best + tol {
                kept.push(s);
            }
        }
        kept.push(t);
        candidates = kept;
    }

    let mut cps = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = last[t];
        if s > 0 {
            cps.push(s);
        }
        t = s;
    }
    cps.reverse();
    Ok(cps)
}

/// Maximal runs of at least `min_len` samples with speed `<= alpha`.
/// X slots break runs. Returned intervals are sample-index ranges.
pub fn no_motion_span(motion: &[Option<f64>], alpha: f64, min_len: usize) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    let min_len = min_len.max(1);
    for i in 0..=motion.len() {
        let still = i < motion.len() && matches!(motion[i], Some(v) if v <= alpha);
        match (still, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push(Interval { start: s as i64, end: i as i64 });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    out
}
