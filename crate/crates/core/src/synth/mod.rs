//! Scripted detection streams with planted ground truth.
//!
//! A [`Scenario`] lists actors whose boxes follow piecewise-linear keyframe
//! scripts; people may also carry an arm script from which a COCO-style
//! skeleton is derived. Generation samples the scripts at the scenario's
//! frame rate and optionally adds seeded uniform jitter and per-object
//! dropout.

mod scenarios;

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point};
use crate::ingest::{FrameDetections, KeypointName, Keypoints, ObjectNode, StreamHeader};
use crate::metrics::TruthEvent;
use crate::rules::{register_rules, EventRule, RuleSet};

pub use scenarios::{builtin, builtin_names, builtin_scenarios};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario `{name}`: {reason}")]
    InvalidScenario { name: String, reason: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Box keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxKey {
    pub t_ms: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxKey {
    pub fn new(t_ms: i64, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { t_ms, x, y, w, h }
    }
}

/// Arm keyframe: angles between upper arm and torso, 0 = hanging down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmKey {
    pub t_ms: i64,
    pub right_deg: f64,
    pub left_deg: f64,
}

/// Skeleton script; arms reach toward `facing` (+1 right, −1 left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseScript {
    pub facing: f64,
    pub arms: Vec<ArmKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub track: u64,
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    /// Present from the first to the last keyframe, inclusive.
    pub keys: Vec<BoxKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseScript>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Standard deviation of the uniform jitter on box centre, box size and
    /// keypoints, in pixels.
    #[serde(default)]
    pub jitter_px: f64,
    /// Per-object, per-frame probability of a missed detection.
    #[serde(default)]
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_ms: i64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: Noise,
    /// True when the scenario plants at least one event for its rules.
    #[serde(default)]
    pub positive: bool,
    #[serde(default)]
    pub rules: Vec<EventRule>,
    #[serde(default)]
    pub planted_events: Vec<TruthEvent>,
    pub actors: Vec<Actor>,
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub header: StreamHeader,
    pub frames: Vec<FrameDetections>,
    pub truth: Vec<TruthEvent>,
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a + (b - a) * u
}

/// Finds the keyframe segment around `t` and the blend factor.
fn segment<K>(keys: &[K], t: i64, time: impl Fn(&K) -> i64) -> (usize, usize, f64) {
    let last = keys.len() - 1;
    if t <= time(&keys[0]) {
        return (0, 0, 0.0);
    }
    if t >= time(&keys[last]) {
        return (last, last, 0.0);
    }
    let j = keys.partition_point(|k| time(k) <= t);
    let (a, b) = (time(&keys[j - 1]), time(&keys[j]));
    (j - 1, j, (t - a) as f64 / (b - a) as f64)
}

impl Actor {
    pub fn span(&self) -> (i64, i64) {
        (self.keys[0].t_ms, self.keys[self.keys.len() - 1].t_ms)
    }

    pub fn box_at(&self, t: i64) -> Option<BoundingBox> {
        let (s, e) = self.span();
        if t < s || t > e {
            return None;
        }
        let (i, j, u) = segment(&self.keys, t, |k| k.t_ms);
        let (a, b) = (self.keys[i], self.keys[j]);
        Some(BoundingBox::new(lerp(a.x, b.x, u), lerp(a.y, b.y, u), lerp(a.w, b.w, u), lerp(a.h, b.h, u)))
    }

    fn arms_at(&self, t: i64) -> Option<(f64, f64, f64)> {
        let pose = self.pose.as_ref()?;
        let (i, j, u) = segment(&pose.arms, t, |k| k.t_ms);
        let (a, b) = (pose.arms[i], pose.arms[j]);
        Some((pose.facing, lerp(a.right_deg, b.right_deg, u), lerp(a.left_deg, b.left_deg, u)))
    }
}

/// Skeleton for a standing person filling `b`, arms raised by the given
/// angles toward `facing`. The hip sits straight below the shoulder on each
/// side, so the torso-to-upper-arm angle equals the scripted angle.
pub fn skeleton(b: &BoundingBox, facing: f64, right_deg: f64, left_deg: f64) -> Keypoints {
    use KeypointName::*;
    let cx = b.x + b.w / 2.0;
    let sy = b.y + 0.25 * b.h;
    let hy = b.y + 0.55 * b.h;
    let sw = 0.2 * b.w;
    let u = 0.25 * b.h;
    let mut kp = Keypoints::default();
    let arm = |kp: &mut Keypoints, side: f64, deg: f64, sh: KeypointName, el: KeypointName, wr: KeypointName, hip: KeypointName| {
        let s = Point::new(cx + side * sw, sy);
        let (dx, dy) = (facing * deg.to_radians().sin(), deg.to_radians().cos());
        kp.set(sh, s);
        kp.set(el, Point::new(s.x + u * dx, s.y + u * dy));
        kp.set(wr, Point::new(s.x + 2.0 * u * dx, s.y + 2.0 * u * dy));
        kp.set(hip, Point::new(s.x, hy));
    };
    arm(&mut kp, facing, right_deg, RightShoulder, RightElbow, RightWrist, RightHip);
    arm(&mut kp, -facing, left_deg, LeftShoulder, LeftElbow, LeftWrist, LeftHip);
    kp.set(Nose, Point::new(cx + facing * 0.1 * b.w, b.y + 0.1 * b.h));
    for (side, knee, ankle) in [(facing, RightKnee, RightAnkle), (-facing, LeftKnee, LeftAnkle)] {
        kp.set(knee, Point::new(cx + side * sw, b.y + 0.78 * b.h));
        kp.set(ankle, Point::new(cx + side * sw, b.y + b.h));
    }
    kp
}

impl Scenario {
    pub fn with_noise(mut self, jitter_px: f64, dropout: f64, seed: u64) -> Self {
        self.noise = Noise { jitter_px, dropout };
        self.seed = seed;
        self
    }

    pub fn rule_set(&self) -> Result<RuleSet, SynthError> {
        register_rules(self.rules.iter().cloned()).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn invalid(&self, reason: impl Into<String>) -> SynthError {
        SynthError::InvalidScenario { name: self.name.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.name.is_empty() {
            return Err(self.invalid("empty name"));
        }
        if self.duration_ms <= 0 {
            return Err(self.invalid("duration_ms must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0 && self.fps <= 1000.0) {
            return Err(self.invalid("fps must be in (0, 1000]"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(self.invalid("resolution must be positive"));
        }
        let n = self.noise;
        if !(n.jitter_px.is_finite() && n.jitter_px >= 0.0) {
            return Err(self.invalid("jitter_px must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&n.dropout) {
            return Err(self.invalid("dropout must be in [0, 1)"));
        }
        let mut tracks = HashSet::new();
        for a in &self.actors {
            if !tracks.insert(a.track) {
                return Err(self.invalid(format!("track {} appears twice", a.track)));
            }
            if a.keys.is_empty() {
                return Err(self.invalid(format!("track {} has no keyframes", a.track)));
            }
            if a.keys.windows(2).any(|w| w[0].t_ms >= w[1].t_ms) {
                return Err(self.invalid(format!("track {} keyframes must strictly increase in time", a.track)));
            }
            for k in &a.keys {
                BoundingBox::new(k.x, k.y, k.w, k.h)
                    .validate()
                    .map_err(|e| self.invalid(format!("track {}: {e}", a.track)))?;
            }
            if let Some(p) = &a.pose {
                if p.arms.is_empty() || p.arms.windows(2).any(|w| w[0].t_ms >= w[1].t_ms) {
                    return Err(self.invalid(format!("track {} arm keyframes must be non-empty and increasing", a.track)));
                }
                if p.facing.abs() != 1.0 {
                    return Err(self.invalid(format!("track {} facing must be 1 or -1", a.track)));
                }
            }
        }
        self.rule_set()?;
        Ok(())
    }

    /// Frame timestamps: `round(k · 1000 / fps)` below the duration.
    pub fn timestamps(&self) -> Vec<i64> {
        let mut out = Vec::new();
        for k in 0.. {
            let t = (k as f64 * 1000.0 / self.fps).round() as i64;
            if t >= self.duration_ms {
                break;
            }
            if out.last().is_none_or(|&p| t > p) {
                out.push(t);
            }
        }
        out
    }
}

/// Samples the scenario into frames plus its ground truth.
pub fn generate(scenario: &Scenario) -> Result<Generated, SynthError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let Noise { jitter_px, dropout } = scenario.noise;
    // Uniform on [-a, a] has standard deviation a / sqrt(3).
    let a = jitter_px * 3f64.sqrt();
    let jitter = |rng: &mut ChaCha8Rng| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };

    let mut actors: Vec<&Actor> = scenario.actors.iter().collect();
    actors.sort_by_key(|a| a.track);

    let mut frames = Vec::new();
    for (k, t) in scenario.timestamps().into_iter().enumerate() {
        let mut objects = Vec::new();
        for actor in &actors {
            let Some(b) = actor.box_at(t) else { continue };
            if dropout > 0.0 && rng.gen_bool(dropout) {
                continue;
            }
            let (cx, cy) = (b.x + b.w / 2.0 + jitter(&mut rng), b.y + b.h / 2.0 + jitter(&mut rng));
            let w = (b.w + jitter(&mut rng)).max(1.0);
            let h = (b.h + jitter(&mut rng)).max(1.0);
            let noisy = BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h);
            let mut obj = ObjectNode::new(actor.track, actor.label.clone(), noisy).with_confidence(0.9);
            obj.attributes = actor.attrs.clone();
            if let Some((facing, r, l)) = actor.arms_at(t) {
                let kp = skeleton(&b, facing, r, l);
                let mut noisy = Keypoints::default();
                for (name, p) in kp.iter() {
                    noisy.set(name, Point::new(p.x + jitter(&mut rng), p.y + jitter(&mut rng)));
                }
                obj = obj.with_keypoints(noisy);
            }
            objects.push(obj);
        }
        frames.push(FrameDetections::new(k as u64, t, objects));
    }
    Ok(Generated {
        header: StreamHeader::new(scenario.width, scenario.height),
        frames,
        truth: scenario.planted_events.clone(),
    })
}

impl Generated {
    pub fn write_stream<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header.to_line())?;
        for f in &self.frames {
            writeln!(w, "{}", f.to_line())?;
        }
        w.flush()
    }

    pub fn write_truth<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.truth {
            writeln!(w, "{}", t.to_line())?;
        }
        w.flush()
    }

    pub fn stream_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_stream(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// Reads a truth file (one JSON event per line).
pub fn read_truth(text: &str) -> Result<Vec<TruthEvent>, SynthError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SynthError::Parse(format!("truth line {}: {e}", i + 1))))
        .collect()
}

/// Multiplies every coordinate (boxes and keypoints) by `k`.
pub fn scale_frames(frames: &[FrameDetections], k: f64) -> Vec<FrameDetections> {
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for o in &mut f.objects {
                o.bbox = o.bbox.scaled(k);
                o.keypoints = o.keypoints.map(|kp| kp.map_points(|p| p.scaled(k)));
            }
            f
        })
        .collect()
}
