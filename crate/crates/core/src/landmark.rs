//! Hand-landmark data model: the 21-point frame, its NDJSON wire format,
//! confidence gating and hand-centric normalization.
//!
//! Coordinates follow the tracker convention: `x` and `y` are normalized
//! image coordinates in `[0, 1]` with `y` growing downward, `z` is a unitless
//! relative depth. Only the image plane is used for distances.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Number of landmarks in one hand observation.
pub const LANDMARK_COUNT: usize = 21;

/// Index of the wrist landmark.
pub const WRIST: usize = 0;

/// Segments shorter than this are treated as degenerate.
pub(crate) const MIN_SEGMENT: f64 = 1e-9;

/// Palm widths below this cannot serve as a scale reference.
pub const MIN_HAND_SIZE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("malformed record at {path}: {message}")]
    MalformedRecord { path: String, message: String },
    #[error("{path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl FrameError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> &str {
        match self {
            Self::MalformedRecord { path, .. } | Self::SchemaViolation { path, .. } => path,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    #[error("degenerate hand: scale reference or joint segment has zero length")]
    DegenerateHand,
    #[error("finger {0} is not extended")]
    NotExtended(FingerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "Left",
            Self::Right => "Right",
        }
    }
}

/// The five fingers in canonical order (thumb first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerId {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl FingerId {
    pub const ALL: [FingerId; 5] = [
        FingerId::Thumb,
        FingerId::Index,
        FingerId::Middle,
        FingerId::Ring,
        FingerId::Pinky,
    ];

    /// Landmark indices of the joint chain, proximal to distal
    /// (MCP-equivalent, PIP-equivalent, DIP-equivalent, TIP).
    pub fn chain(self) -> [usize; 4] {
        let base = 1 + 4 * self.ordinal();
        [base, base + 1, base + 2, base + 3]
    }

    pub fn mcp(self) -> usize {
        self.chain()[0]
    }

    pub fn tip(self) -> usize {
        self.chain()[3]
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Thumb => "thumb",
            Self::Index => "index",
            Self::Middle => "middle",
            Self::Ring => "ring",
            Self::Pinky => "pinky",
        }
    }

    /// Single-letter code used in compact signatures.
    pub fn code(self) -> char {
        match self {
            Self::Thumb => 'T',
            Self::Index => 'I',
            Self::Middle => 'M',
            Self::Ring => 'R',
            Self::Pinky => 'P',
        }
    }
}

impl fmt::Display for FingerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Euclidean distance in the image plane.
    pub fn planar_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

pub type Points = [Point3; LANDMARK_COUNT];

/// One timestamped 21-point hand observation in raw image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    timestamp_us: u64,
    handedness: Handedness,
    confidence: f64,
    points: Points,
}

impl LandmarkFrame {
    pub fn new(
        timestamp_us: u64,
        handedness: Handedness,
        confidence: f64,
        points: Points,
    ) -> Result<Self, FrameError> {
        if !(confidence.is_finite() && (0.0..=1.0).contains(&confidence)) {
            return Err(FrameError::schema("conf", "out of [0,1]"));
        }
        for (k, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(FrameError::schema(format!("pts[{k}]"), "non-finite coordinate"));
            }
            if !(0.0..=1.0).contains(&p.x) {
                return Err(FrameError::schema(format!("pts[{k}].x"), "out of [0,1]"));
            }
            if !(0.0..=1.0).contains(&p.y) {
                return Err(FrameError::schema(format!("pts[{k}].y"), "out of [0,1]"));
            }
        }
        Ok(Self {
            timestamp_us,
            handedness,
            confidence,
            points,
        })
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.points[index]
    }

    pub fn hand_size(&self) -> Result<f64, GeometryError> {
        palm_width(&self.points)
    }

    pub fn normalize(&self) -> Result<HandPose, GeometryError> {
        let size = self.hand_size()?;
        Ok(HandPose {
            timestamp_us: self.timestamp_us,
            handedness: self.handedness,
            scale: size,
            points: normalize_points(&self.points, size),
        })
    }

    /// Canonical single-line NDJSON encoding (no trailing newline).
    pub fn to_ndjson(&self) -> String {
        let wire = WireFrame {
            t_us: self.timestamp_us,
            hand: self.handedness,
            conf: self.confidence,
            pts: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        };
        serde_json::to_string(&wire).expect("frame serialization is infallible")
    }
}

#[derive(Serialize)]
struct WireFrame {
    t_us: u64,
    hand: Handedness,
    conf: f64,
    pts: Vec<[f64; 3]>,
}

/// A hand-centric pose: wrist at the origin, coordinates in palm widths.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    timestamp_us: u64,
    handedness: Handedness,
    /// Palm width of the frame this pose was normalized from, in the
    /// source frame's units.
    scale: f64,
    points: Points,
}

impl HandPose {
    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn source_scale(&self) -> f64 {
        self.scale
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.points[index]
    }

    /// Re-normalizing an already hand-centric pose is a no-op up to rounding.
    pub fn normalize(&self) -> Result<HandPose, GeometryError> {
        let size = palm_width(&self.points)?;
        Ok(HandPose {
            points: normalize_points(&self.points, size),
            ..self.clone()
        })
    }

    /// Planar mean of all landmarks.
    pub fn center(&self) -> (f64, f64) {
        planar_mean(&self.points)
    }
}

/// Index-MCP to pinky-MCP distance in the image plane.
pub fn palm_width(points: &Points) -> Result<f64, GeometryError> {
    let d = points[FingerId::Index.mcp()].planar_distance(&points[FingerId::Pinky.mcp()]);
    if d < MIN_HAND_SIZE {
        Err(GeometryError::DegenerateHand)
    } else {
        Ok(d)
    }
}

pub(crate) fn planar_mean(points: &Points) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    (sx / n, sy / n)
}

fn normalize_points(points: &Points, size: f64) -> Points {
    let w = points[WRIST];
    points.map(|p| Point3::new((p.x - w.x) / size, (p.y - w.y) / size, (p.z - w.z) / size))
}

/// Inclusive confidence gate.
pub fn accept_frame(frame: &LandmarkFrame, min_confidence: f64) -> bool {
    frame.confidence >= min_confidence
}

/// Parses one NDJSON landmark record.
pub fn parse_frame(line: &str) -> Result<LandmarkFrame, FrameError> {
    let value: Value = serde_json::from_str(line).map_err(|e| FrameError::MalformedRecord {
        path: format!("line:{} column:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| FrameError::schema("$", "expected a JSON object"))?;

    let field = |name: &str| {
        obj.get(name)
            .ok_or_else(|| FrameError::schema(name, "missing field"))
    };

    let t_us = field("t_us")?
        .as_u64()
        .ok_or_else(|| FrameError::schema("t_us", "expected a non-negative integer"))?;
    let hand = match field("hand")?.as_str() {
        Some("Left") => Handedness::Left,
        Some("Right") => Handedness::Right,
        _ => return Err(FrameError::schema("hand", "expected \"Left\" or \"Right\"")),
    };
    let conf = field("conf")?
        .as_f64()
        .ok_or_else(|| FrameError::schema("conf", "expected a number"))?;

    let pts = field("pts")?
        .as_array()
        .ok_or_else(|| FrameError::schema("pts", "expected an array"))?;
    if pts.len() != LANDMARK_COUNT {
        return Err(FrameError::schema(
            "pts",
            format!("expected {LANDMARK_COUNT}, got {}", pts.len()),
        ));
    }
    let mut points = [Point3::default(); LANDMARK_COUNT];
    for (k, raw) in pts.iter().enumerate() {
        let coords = raw
            .as_array()
            .filter(|c| c.len() == 3)
            .ok_or_else(|| FrameError::schema(format!("pts[{k}]"), "expected [x,y,z]"))?;
        let mut xyz = [0.0; 3];
        for (axis, (slot, v)) in xyz.iter_mut().zip(coords).enumerate() {
            *slot = v.as_f64().ok_or_else(|| {
                FrameError::schema(
                    format!("pts[{k}].{}", ["x", "y", "z"][axis]),
                    "expected a number",
                )
            })?;
        }
        points[k] = Point3::new(xyz[0], xyz[1], xyz[2]);
    }
    LandmarkFrame::new(t_us, hand, conf, points)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn flat_hand() -> Points {
        let mut pts = [Point3::new(0.5, 0.5, 0.0); LANDMARK_COUNT];
        for (k, p) in pts.iter_mut().enumerate().skip(1) {
            let finger = (k - 1) / 4;
            let joint = (k - 1) % 4;
            p.x = 0.4 + 0.05 * finger as f64;
            p.y = 0.45 - 0.04 * joint as f64;
        }
        pts
    }

    fn record(n: usize, x: f64) -> String {
        let pts: Vec<String> = (0..n).map(|_| format!("[{x},0.5,0.0]")).collect();
        format!(
            r#"{{"t_us":10,"hand":"Right","conf":0.9,"pts":[{}]}}"#,
            pts.join(",")
        )
    }

    #[test]
    fn parses_well_formed_record() {
        let f = parse_frame(&record(21, 0.25)).unwrap();
        assert_eq!(f.points().len(), 21);
        assert_eq!(f.timestamp_us(), 10);
        assert_eq!(f.handedness(), Handedness::Right);
        assert_eq!(f.confidence(), 0.9);
    }

    #[test]
    fn wrong_point_count_is_schema_violation() {
        let err = parse_frame(&record(20, 0.25)).unwrap_err();
        assert_eq!(err.to_string(), "pts: expected 21, got 20");
    }

    #[test]
    fn out_of_range_x_names_the_point() {
        let mut pts: Vec<String> = (0..21).map(|_| "[0.1,0.5,0.0]".to_string()).collect();
        pts[7] = "[1.5,0.5,0.0]".into();
        let line = format!(r#"{{"t_us":1,"hand":"Left","conf":0.5,"pts":[{}]}}"#, pts.join(","));
        let err = parse_frame(&line).unwrap_err();
        assert!(matches!(err, FrameError::SchemaViolation { .. }));
        assert_eq!(err.to_string(), "pts[7].x: out of [0,1]");
    }

    #[test]
    fn syntax_errors_are_malformed() {
        assert!(matches!(
            parse_frame("{\"t_us\": 1,"),
            Err(FrameError::MalformedRecord { .. })
        ));
        assert!(matches!(
            parse_frame("not json"),
            Err(FrameError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn negative_timestamp_and_bad_confidence_rejected() {
        let line = record(21, 0.2).replace("\"t_us\":10", "\"t_us\":-1");
        assert_eq!(parse_frame(&line).unwrap_err().path(), "t_us");
        let line = record(21, 0.2).replace("0.9", "1.2");
        assert_eq!(parse_frame(&line).unwrap_err().path(), "conf");
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let f = LandmarkFrame::new(33_333, Handedness::Left, 0.87, flat_hand()).unwrap();
        let line = f.to_ndjson();
        let back = parse_frame(&line).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_ndjson(), line);
    }

    #[test]
    fn confidence_gate_is_inclusive() {
        let f = |c| LandmarkFrame::new(0, Handedness::Right, c, flat_hand()).unwrap();
        assert!(accept_frame(&f(0.9), 0.5));
        assert!(!accept_frame(&f(0.3), 0.5));
        assert!(accept_frame(&f(0.5), 0.5));
    }

    #[test]
    fn hand_size_is_planar_mcp_distance() {
        let mut pts = flat_hand();
        pts[5] = Point3::new(0.4, 0.5, 0.3);
        pts[17] = Point3::new(0.6, 0.5, -0.2);
        let f = LandmarkFrame::new(0, Handedness::Right, 1.0, pts).unwrap();
        assert!((f.hand_size().unwrap() - 0.2).abs() < 1e-12);

        pts[17] = pts[5];
        let f = LandmarkFrame::new(0, Handedness::Right, 1.0, pts).unwrap();
        assert_eq!(f.hand_size(), Err(GeometryError::DegenerateHand));
        assert_eq!(f.normalize().unwrap_err(), GeometryError::DegenerateHand);
    }

    #[test]
    fn normalize_moves_wrist_to_origin_and_is_scale_free() {
        let pts = flat_hand();
        let f = LandmarkFrame::new(0, Handedness::Right, 1.0, pts).unwrap();
        let n = f.normalize().unwrap();
        assert_eq!(n.point(WRIST), Point3::new(0.0, 0.0, 0.0));
        assert!((palm_width(n.points()).unwrap() - 1.0).abs() < 1e-12);

        let w = pts[WRIST];
        let doubled = pts.map(|p| {
            Point3::new(w.x + 2.0 * (p.x - w.x), w.y + 2.0 * (p.y - w.y), w.z + 2.0 * (p.z - w.z))
        });
        let g = LandmarkFrame::new(0, Handedness::Right, 1.0, doubled).unwrap();
        let m = g.normalize().unwrap();
        for (a, b) in n.points().iter().zip(m.points()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn topology_partitions_indices() {
        let mut seen: Vec<usize> = FingerId::ALL.iter().flat_map(|f| f.chain()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (1..=20).collect::<Vec<_>>());
    }
}
