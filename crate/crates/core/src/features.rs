//! Discrete per-frame gesture features: finger extension, 8-way finger
//! direction and proximity-based finger groups.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::landmark::{
    planar_mean, FingerId, GeometryError, HandPose, Handedness, LandmarkFrame, Point3, MIN_SEGMENT,
    WRIST,
};

/// Eight 45° compass sectors in counterclockwise order starting at east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compass8 {
    E,
    NE,
    N,
    NW,
    W,
    SW,
    S,
    SE,
}

impl Compass8 {
    pub const ALL: [Compass8; 8] = [
        Compass8::E,
        Compass8::NE,
        Compass8::N,
        Compass8::NW,
        Compass8::W,
        Compass8::SW,
        Compass8::S,
        Compass8::SE,
    ];

    /// Sector for an angle in degrees; lower sector bounds are inclusive.
    pub fn from_angle(angle_deg: f64) -> Self {
        let a = wrap_degrees(angle_deg);
        let sector = ((a + 22.5) / 45.0).floor() as usize % 8;
        Self::ALL[sector]
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// The next sector counterclockwise.
    pub fn rotate_ccw(self, steps: usize) -> Self {
        Self::ALL[(self.ordinal() + steps) % 8]
    }

    /// Human-readable direction word in screen terms.
    pub fn word(self) -> &'static str {
        match self {
            Self::E => "right",
            Self::NE => "up-right",
            Self::N => "up",
            Self::NW => "up-left",
            Self::W => "left",
            Self::SW => "down-left",
            Self::S => "down",
            Self::SE => "down-right",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::E => "E",
            Self::NE => "NE",
            Self::N => "N",
            Self::NW => "NW",
            Self::W => "W",
            Self::SW => "SW",
            Self::S => "S",
            Self::SE => "SE",
        }
    }
}

fn wrap_degrees(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// A planar direction together with its compass sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heading {
    pub angle_deg: f64,
    pub bucket: Compass8,
}

impl Heading {
    /// Heading of an image-plane vector, converted to screen-up convention
    /// (image `y` grows downward).
    pub fn from_image_vector(dx: f64, dy: f64) -> Self {
        let angle_deg = wrap_degrees((-dy).atan2(dx).to_degrees());
        Self {
            angle_deg,
            bucket: Compass8::from_angle(angle_deg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Non-thumb fingers are extended when PIP + DIP bend is below this.
    pub curl_max_deg: f64,
    /// Thumb IP bend must be below this for the thumb to count as extended.
    pub thumb_bend_max_deg: f64,
    /// Thumb tip must be farther than this from the hand center (palm widths).
    pub thumb_reach_min: f64,
    /// Tips closer than this are grouped (palm widths).
    pub group_radius: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            curl_max_deg: 60.0,
            thumb_bend_max_deg: 40.0,
            thumb_reach_min: 0.7,
            group_radius: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerState {
    pub finger: FingerId,
    pub extended: bool,
    /// `None` iff the finger is curled.
    pub direction: Option<Heading>,
    pub curl_deg: f64,
}

/// Discrete summary of a frame's features, used for keyframe decisions,
/// rendering and caching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub extended: [bool; 5],
    pub directions: [Option<Compass8>; 5],
    pub groups: Vec<Vec<FingerId>>,
}

impl Signature {
    pub fn is_extended(&self, finger: FingerId) -> bool {
        self.extended[finger.ordinal()]
    }

    pub fn extended_fingers(&self) -> Vec<FingerId> {
        FingerId::ALL
            .into_iter()
            .filter(|f| self.is_extended(*f))
            .collect()
    }

    /// Groups with two or more members.
    pub fn multi_groups(&self) -> impl Iterator<Item = &Vec<FingerId>> {
        self.groups.iter().filter(|g| g.len() > 1)
    }
}

impl fmt::Display for Signature {
    /// Compact form, e.g. `T:- I:N M:N R:- P:-|IM`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, finger) in FingerId::ALL.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            let dir = self.directions[k].map_or("-", Compass8::code);
            write!(f, "{}:{}", finger.code(), dir)?;
        }
        f.write_str("|")?;
        let groups: Vec<String> = self
            .groups
            .iter()
            .map(|g| g.iter().map(|m| m.code()).collect())
            .collect();
        f.write_str(&groups.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub fingers: [FingerState; 5],
    /// Partition of the extended fingers in canonical order.
    pub groups: Vec<Vec<FingerId>>,
    pub handedness: Handedness,
    /// Planar mean of the 21 raw points.
    pub hand_center: (f64, f64),
    /// Raw wrist position in the image plane.
    pub wrist: (f64, f64),
    pub hand_size: f64,
    pub source_timestamp_us: u64,
}

impl FeatureSet {
    pub fn finger(&self, finger: FingerId) -> &FingerState {
        &self.fingers[finger.ordinal()]
    }

    pub fn signature(&self) -> Signature {
        Signature {
            extended: self.fingers.map(|s| s.extended),
            directions: self.fingers.map(|s| s.direction.map(|h| h.bucket)),
            groups: self.groups.clone(),
        }
    }
}

/// Unsigned planar angle in degrees between `j - a` and `b - j`.
fn bend_deg(a: Point3, j: Point3, b: Point3) -> Result<f64, GeometryError> {
    let (ux, uy) = (j.x - a.x, j.y - a.y);
    let (vx, vy) = (b.x - j.x, b.y - j.y);
    if ux.hypot(uy) < MIN_SEGMENT || vx.hypot(vy) < MIN_SEGMENT {
        return Err(GeometryError::DegenerateHand);
    }
    let cross = ux * vy - uy * vx;
    let dot = ux * vx + uy * vy;
    Ok(cross.abs().atan2(dot).to_degrees())
}

/// Extension flag and curl angle for one finger of a hand-centric pose.
pub fn finger_extension(
    pose: &HandPose,
    finger: FingerId,
    cfg: &FeatureConfig,
) -> Result<(bool, f64), GeometryError> {
    let [mcp, pip, dip, tip] = finger.chain().map(|i| pose.point(i));
    if finger == FingerId::Thumb {
        let bend = bend_deg(pip, dip, tip)?;
        let (cx, cy) = pose.center();
        let reach = (tip.x - cx).hypot(tip.y - cy);
        Ok((bend < cfg.thumb_bend_max_deg && reach > cfg.thumb_reach_min, bend))
    } else {
        let curl = bend_deg(mcp, pip, dip)? + bend_deg(pip, dip, tip)?;
        Ok((curl < cfg.curl_max_deg, curl))
    }
}

/// Direction of an extended finger from MCP to TIP.
pub fn finger_direction(pose: &HandPose, finger: FingerId) -> Result<Heading, GeometryError> {
    let mcp = pose.point(finger.mcp());
    let tip = pose.point(finger.tip());
    let (dx, dy) = (tip.x - mcp.x, tip.y - mcp.y);
    if dx.hypot(dy) < MIN_SEGMENT {
        return Err(GeometryError::DegenerateHand);
    }
    Ok(Heading::from_image_vector(dx, dy))
}

/// Like [`finger_direction`] but refuses curled fingers.
pub fn extended_finger_direction(
    pose: &HandPose,
    finger: FingerId,
    cfg: &FeatureConfig,
) -> Result<Heading, GeometryError> {
    let (extended, _) = finger_extension(pose, finger, cfg)?;
    if !extended {
        return Err(GeometryError::NotExtended(finger));
    }
    finger_direction(pose, finger)
}

/// Connected components of extended fingers whose tips are closer than
/// the grouping radius.
pub fn finger_groups(
    pose: &HandPose,
    states: &[FingerState],
    cfg: &FeatureConfig,
) -> Vec<Vec<FingerId>> {
    let mut extended: Vec<FingerId> = states
        .iter()
        .filter(|s| s.extended)
        .map(|s| s.finger)
        .collect();
    extended.sort_unstable();
    extended.dedup();

    let n = extended.len();
    let mut component: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let a = pose.point(extended[i].tip());
            let b = pose.point(extended[j].tip());
            if a.planar_distance(&b) < cfg.group_radius {
                let (ri, rj) = (root(&mut component, i), root(&mut component, j));
                // Smaller index becomes the root so groups come out sorted.
                component[ri.max(rj)] = ri.min(rj);
            }
        }
    }

    let mut groups: Vec<Vec<FingerId>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = root(&mut component, i);
        match roots.iter().position(|&x| x == r) {
            Some(g) => groups[g].push(extended[i]),
            None => {
                roots.push(r);
                groups.push(vec![extended[i]]);
            }
        }
    }
    groups
}

/// Full feature extraction for an accepted frame.
pub fn extract_features(
    frame: &LandmarkFrame,
    cfg: &FeatureConfig,
) -> Result<FeatureSet, GeometryError> {
    let pose = frame.normalize()?;
    let mut fingers = [FingerState {
        finger: FingerId::Thumb,
        extended: false,
        direction: None,
        curl_deg: 0.0,
    }; 5];
    for finger in FingerId::ALL {
        let (extended, curl_deg) = finger_extension(&pose, finger, cfg)?;
        let direction = if extended {
            Some(finger_direction(&pose, finger)?)
        } else {
            None
        };
        fingers[finger.ordinal()] = FingerState {
            finger,
            extended,
            direction,
            curl_deg,
        };
    }
    let groups = finger_groups(&pose, &fingers, cfg);
    let wrist = frame.point(WRIST);
    Ok(FeatureSet {
        fingers,
        groups,
        handedness: frame.handedness(),
        hand_center: planar_mean(frame.points()),
        wrist: (wrist.x, wrist.y),
        hand_size: pose.source_scale(),
        source_timestamp_us: frame.timestamp_us(),
    })
}
