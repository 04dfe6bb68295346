//! Detection-stream records: parsing, validation and ordered iteration.
//!
//! The stream is line-delimited JSON. An optional header line declares the
//! format version and the frame resolution:
//!
//! ```text
//! {"vekg_stream":1,"width":1280,"height":720}
//! {"frame":0,"ts_ms":0,"objects":[{"track":7,"label":"person","conf":0.9,"bbox":{"x":10,"y":10,"w":40,"h":100}}]}
//! ```
//!
//! Objects may also carry `attrs` (string map), `keypoints` (COCO-17 names
//! mapped to `[x, y]`) and `features` (opaque real vector).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::BoundingBox;
use crate::geometry::Point;

pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("non-monotonic time: timestamp {got} ms does not exceed previous {previous} ms")]
    NonMonotonicTime { previous: i64, got: i64 },
    #[error("non-monotonic frame index: {got} does not exceed previous {previous}")]
    NonMonotonicFrame { previous: u64, got: u64 },
    #[error("cannot open {path}: {source}")]
    SourceUnavailable { path: PathBuf, source: io::Error },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

/// An ingest error tagged with its 1-based line number.
#[derive(Debug, Error)]
#[error("line {line}: {source}")]
pub struct LineError {
    pub line: usize,
    #[source]
    pub source: IngestError,
}

/// The 17 COCO keypoint names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeypointName {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl KeypointName {
    pub const ALL: [KeypointName; 17] = [
        Self::Nose,
        Self::LeftEye,
        Self::RightEye,
        Self::LeftEar,
        Self::RightEar,
        Self::LeftShoulder,
        Self::RightShoulder,
        Self::LeftElbow,
        Self::RightElbow,
        Self::LeftWrist,
        Self::RightWrist,
        Self::LeftHip,
        Self::RightHip,
        Self::LeftKnee,
        Self::RightKnee,
        Self::LeftAnkle,
        Self::RightAnkle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nose => "nose",
            Self::LeftEye => "left_eye",
            Self::RightEye => "right_eye",
            Self::LeftEar => "left_ear",
            Self::RightEar => "right_ear",
            Self::LeftShoulder => "left_shoulder",
            Self::RightShoulder => "right_shoulder",
            Self::LeftElbow => "left_elbow",
            Self::RightElbow => "right_elbow",
            Self::LeftWrist => "left_wrist",
            Self::RightWrist => "right_wrist",
            Self::LeftHip => "left_hip",
            Self::RightHip => "right_hip",
            Self::LeftKnee => "left_knee",
            Self::RightKnee => "right_knee",
            Self::LeftAnkle => "left_ankle",
            Self::RightAnkle => "right_ankle",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

/// Named 2-D skeleton points; any subset of the COCO-17 set may be present.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoints([Option<Point>; 17]);

impl Keypoints {
    pub fn get(&self, name: KeypointName) -> Option<Point> {
        self.0[name as usize]
    }

    pub fn set(&mut self, name: KeypointName, p: Point) {
        self.0[name as usize] = Some(p);
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeypointName, Point)> + '_ {
        KeypointName::ALL.into_iter().filter_map(|k| self.get(k).map(|p| (k, p)))
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Self {
        let mut out = Keypoints::default();
        for (k, p) in self.iter() {
            out.set(k, f(p));
        }
        out
    }
}

impl Serialize for Keypoints {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, Point> = self.iter().map(|(k, p)| (k.as_str(), p)).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Keypoints {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, Point>::deserialize(d)?;
        let mut kp = Keypoints::default();
        for (name, p) in map {
            let k = KeypointName::parse(&name)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown keypoint `{name}`")))?;
            kp.set(k, p);
        }
        Ok(kp)
    }
}

/// One detected object instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    #[serde(rename = "track")]
    pub track_id: u64,
    pub label: String,
    #[serde(rename = "conf")]
    pub confidence: f64,
    pub bbox: BoundingBox,
    #[serde(rename = "attrs", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Keypoints>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl ObjectNode {
    pub fn new(track_id: u64, label: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            track_id,
            label: label.into(),
            confidence: 1.0,
            bbox,
            attributes: BTreeMap::new(),
            keypoints: None,
            features: None,
        }
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn with_keypoints(mut self, kp: Keypoints) -> Self {
        self.keypoints = Some(kp);
        self
    }

    pub fn with_confidence(mut self, c: f64) -> Self {
        self.confidence = c;
        self
    }

    fn validate(&self) -> Result<(), IngestError> {
        self.bbox
            .validate()
            .map_err(|e| IngestError::SchemaViolation(format!("track {}: {e}", self.track_id)))?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(IngestError::SchemaViolation(format!(
                "track {}: confidence {} outside [0, 1]",
                self.track_id, self.confidence
            )));
        }
        if let Some(kp) = &self.keypoints {
            if let Some((k, _)) = kp.iter().find(|(_, p)| !p.is_finite()) {
                return Err(IngestError::SchemaViolation(format!(
                    "track {}: keypoint {} is not finite",
                    self.track_id,
                    k.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// All detections of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "ts_ms")]
    pub timestamp: i64,
    pub objects: Vec<ObjectNode>,
}

impl FrameDetections {
    pub fn new(frame_index: u64, timestamp: i64, objects: Vec<ObjectNode>) -> Self {
        Self { frame_index, timestamp, objects }
    }

    /// Checks everything that can be checked without the previous frame.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.timestamp < 0 {
            return Err(IngestError::SchemaViolation(format!("negative timestamp {}", self.timestamp)));
        }
        let mut seen = HashSet::with_capacity(self.objects.len());
        for obj in &self.objects {
            if !seen.insert(obj.track_id) {
                return Err(IngestError::SchemaViolation(format!(
                    "track {} appears twice in frame {}",
                    obj.track_id, self.frame_index
                )));
            }
            obj.validate()?;
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frame serialization cannot fail")
    }
}

/// Header line of a stream file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    #[serde(rename = "vekg_stream")]
    pub version: u32,
    pub width: u32,
    pub height: u32,
}

impl StreamHeader {
    pub fn new(width: u32, height: u32) -> Self {
        Self { version: STREAM_VERSION, width, height }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("header serialization cannot fail")
    }
}

fn classify(e: serde_json::Error) -> IngestError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => IngestError::SchemaViolation(e.to_string()),
        _ => IngestError::MalformedRecord(e.to_string()),
    }
}

/// Parses and validates one record in isolation (no ordering checks).
pub fn parse_record(line: &str) -> Result<FrameDetections, IngestError> {
    let frame: FrameDetections = serde_json::from_str(line).map_err(classify)?;
    frame.validate()?;
    Ok(frame)
}

/// Stateful record parser enforcing strict time and frame ordering.
#[derive(Debug, Default)]
pub struct FrameParser {
    last: Option<(u64, i64)>,
    header: Option<StreamHeader>,
}

impl FrameParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(&self) -> Option<StreamHeader> {
        self.header
    }

    /// Parses one frame record and checks it against the previous one.
    pub fn parse_frame(&mut self, line: &str) -> Result<FrameDetections, IngestError> {
        let frame = parse_record(line)?;
        if let Some((prev_frame, prev_ts)) = self.last {
            if frame.timestamp <= prev_ts {
                return Err(IngestError::NonMonotonicTime { previous: prev_ts, got: frame.timestamp });
            }
            if frame.frame_index <= prev_frame {
                return Err(IngestError::NonMonotonicFrame { previous: prev_frame, got: frame.frame_index });
            }
        }
        self.last = Some((frame.frame_index, frame.timestamp));
        Ok(frame)
    }

    /// Accepts a header if it is the first record; returns `Ok(true)` if the
    /// line was a header.
    fn try_header(&mut self, line: &str) -> Result<bool, IngestError> {
        if self.header.is_some() || self.last.is_some() || !line.contains("\"vekg_stream\"") {
            return Ok(false);
        }
        let header: StreamHeader = serde_json::from_str(line).map_err(classify)?;
        if header.version != STREAM_VERSION {
            return Err(IngestError::SchemaViolation(format!("unsupported stream version {}", header.version)));
        }
        if header.width == 0 || header.height == 0 {
            return Err(IngestError::SchemaViolation("zero resolution in header".into()));
        }
        self.header = Some(header);
        Ok(true)
    }
}

/// Ordered iterator of validated frames over any buffered reader.
///
/// Blank lines are skipped. After the first error the iterator is fused.
pub struct FrameStream<R> {
    reader: R,
    parser: FrameParser,
    line_no: usize,
    buf: String,
    done: bool,
}

impl<R: BufRead> FrameStream<R> {
    pub fn new(reader: R) -> Self {
        Self { reader, parser: FrameParser::new(), line_no: 0, buf: String::new(), done: false }
    }

    pub fn header(&self) -> Option<StreamHeader> {
        self.parser.header()
    }
}

impl<R: BufRead> Iterator for FrameStream<R> {
    type Item = Result<FrameDetections, LineError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            self.line_no += 1;
            let line = self.line_no;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(LineError { line, source: IngestError::Io(e) }));
                }
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let result = match self.parser.try_header(text) {
                Ok(true) => continue,
                Ok(false) => self.parser.parse_frame(text),
                Err(e) => Err(e),
            };
            return Some(result.map_err(|source| {
                self.done = true;
                LineError { line, source }
            }));
        }
        None
    }
}

/// Input source: a file path, or `-` for standard input.
pub type DynStream = FrameStream<Box<dyn BufRead + Send>>;

pub fn open_stream(source: &Path) -> Result<DynStream, IngestError> {
    let reader: Box<dyn BufRead + Send> = if source.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let file = File::open(source)
            .map_err(|e| IngestError::SourceUnavailable { path: source.to_path_buf(), source: e })?;
        Box::new(BufReader::new(file))
    };
    Ok(FrameStream::new(reader))
}

/// Convenience for in-memory text.
pub fn stream_from_reader<R: Read + Send + 'static>(reader: R) -> DynStream {
    FrameStream::new(Box::new(BufReader::new(reader)))
}
