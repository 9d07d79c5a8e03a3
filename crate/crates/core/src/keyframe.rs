//! Keyframe selection over the accepted-frame stream and trajectory
//! description between consecutive keyframes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Compass8, FeatureSet, Heading, Signature};
use crate::landmark::{FingerId, Handedness};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum KeyframeError {
    #[error("non-monotonic timestamp: {candidate_us} µs does not follow {last_us} µs")]
    NonMonotonicTimestamp { last_us: u64, candidate_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframeConfig {
    /// Wrist displacement (palm widths of the last keyframe) that forces a keyframe.
    pub displacement_trigger: f64,
    /// Elapsed time that re-asserts a held gesture.
    pub timeout_us: u64,
    /// Lower bound of the Small magnitude band.
    pub small_from: f64,
    /// Lower bound of the Medium magnitude band.
    pub medium_from: f64,
    /// Lower bound of the Large magnitude band.
    pub large_from: f64,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            displacement_trigger: 0.5,
            timeout_us: 1_000_000,
            small_from: 0.1,
            medium_from: 0.5,
            large_from: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeClass {
    Still,
    Small,
    Medium,
    Large,
}

impl MagnitudeClass {
    pub fn classify(displacement: f64, cfg: &KeyframeConfig) -> Self {
        if displacement < cfg.small_from {
            Self::Still
        } else if displacement < cfg.medium_from {
            Self::Small
        } else if displacement < cfg.large_from {
            Self::Medium
        } else {
            Self::Large
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Self::Still => "still",
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    /// `None` iff the magnitude class is `Still`.
    pub direction: Option<Compass8>,
    pub magnitude_class: MagnitudeClass,
    /// Hand-center displacement in palm widths of the earlier keyframe.
    pub displacement: f64,
    pub duration_us: u64,
}

impl TrajectorySegment {
    /// The discrete part of the segment.
    pub fn class_key(&self) -> (Option<Compass8>, MagnitudeClass) {
        (self.direction, self.magnitude_class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeReason {
    First,
    FeatureChange,
    Displacement,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub features: FeatureSet,
    /// `None` iff `reason` is `First`.
    pub incoming: Option<TrajectorySegment>,
    pub reason: KeyframeReason,
}

impl Keyframe {
    pub fn first(features: FeatureSet) -> Self {
        Self {
            features,
            incoming: None,
            reason: KeyframeReason::First,
        }
    }

    pub fn timestamp_us(&self) -> u64 {
        self.features.source_timestamp_us
    }

    pub fn signature(&self) -> Signature {
        self.features.signature()
    }

    /// Diagnostic log record.
    pub fn record(&self) -> KeyframeRecord {
        let sig = self.signature();
        KeyframeRecord {
            t_us: self.timestamp_us(),
            reason: self.reason,
            hand: self.features.handedness,
            signature: sig.to_string(),
            extended: FingerId::ALL
                .into_iter()
                .filter(|f| sig.is_extended(*f))
                .collect(),
            directions: FingerId::ALL
                .into_iter()
                .filter_map(|f| sig.directions[f.ordinal()].map(|d| (f, d)))
                .collect(),
            groups: sig.groups,
            segment: self.incoming,
        }
    }
}

/// One line of the keyframe log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub t_us: u64,
    pub reason: KeyframeReason,
    pub hand: Handedness,
    pub signature: String,
    pub extended: Vec<FingerId>,
    pub directions: Vec<(FingerId, Compass8)>,
    pub groups: Vec<Vec<FingerId>>,
    pub segment: Option<TrajectorySegment>,
}

fn check_order(last_us: u64, candidate_us: u64) -> Result<(), KeyframeError> {
    if candidate_us <= last_us {
        Err(KeyframeError::NonMonotonicTimestamp {
            last_us,
            candidate_us,
        })
    } else {
        Ok(())
    }
}

/// Decides whether `candidate` becomes a keyframe after `last`. Rules are
/// checked in priority order: feature change, displacement, timeout.
pub fn is_keyframe(
    last: &Keyframe,
    candidate: &FeatureSet,
    cfg: &KeyframeConfig,
) -> Result<Option<KeyframeReason>, KeyframeError> {
    check_order(last.timestamp_us(), candidate.source_timestamp_us)?;
    let prev = &last.features;
    if candidate.signature() != prev.signature() {
        return Ok(Some(KeyframeReason::FeatureChange));
    }
    let moved = (candidate.wrist.0 - prev.wrist.0).hypot(candidate.wrist.1 - prev.wrist.1);
    if moved > cfg.displacement_trigger * prev.hand_size {
        return Ok(Some(KeyframeReason::Displacement));
    }
    // Inclusive so a held gesture is re-asserted on whole-second marks.
    if candidate.source_timestamp_us - last.timestamp_us() >= cfg.timeout_us {
        return Ok(Some(KeyframeReason::Timeout));
    }
    Ok(None)
}

/// Hand-center motion from `prev` to `curr`.
pub fn trajectory_segment(
    prev: &Keyframe,
    curr: &FeatureSet,
    cfg: &KeyframeConfig,
) -> Result<TrajectorySegment, KeyframeError> {
    check_order(prev.timestamp_us(), curr.source_timestamp_us)?;
    let p = &prev.features;
    let dx = (curr.hand_center.0 - p.hand_center.0) / p.hand_size;
    let dy = (curr.hand_center.1 - p.hand_center.1) / p.hand_size;
    let displacement = dx.hypot(dy);
    let magnitude_class = MagnitudeClass::classify(displacement, cfg);
    let direction = match magnitude_class {
        MagnitudeClass::Still => None,
        _ => Some(Heading::from_image_vector(dx, dy).bucket),
    };
    Ok(TrajectorySegment {
        direction,
        magnitude_class,
        displacement,
        duration_us: curr.source_timestamp_us - prev.timestamp_us(),
    })
}

/// Streaming keyframe selector for one session.
#[derive(Debug, Clone, Default)]
pub struct KeyframeSelector {
    cfg: KeyframeConfig,
    last: Option<Keyframe>,
    last_seen_us: Option<u64>,
}

impl KeyframeSelector {
    pub fn new(cfg: KeyframeConfig) -> Self {
        Self {
            cfg,
            last: None,
            last_seen_us: None,
        }
    }

    pub fn last(&self) -> Option<&Keyframe> {
        self.last.as_ref()
    }

    /// Feeds the next accepted frame; returns a keyframe if one is emitted.
    pub fn push(&mut self, features: FeatureSet) -> Result<Option<Keyframe>, KeyframeError> {
        let t = features.source_timestamp_us;
        if let Some(seen) = self.last_seen_us {
            check_order(seen, t)?;
        }
        self.last_seen_us = Some(t);

        let Some(last) = &self.last else {
            let kf = Keyframe::first(features);
            self.last = Some(kf.clone());
            return Ok(Some(kf));
        };
        match is_keyframe(last, &features, &self.cfg)? {
            None => Ok(None),
            Some(reason) => {
                let incoming = trajectory_segment(last, &features, &self.cfg)?;
                let kf = Keyframe {
                    features,
                    incoming: Some(incoming),
                    reason,
                };
                self.last = Some(kf.clone());
                Ok(Some(kf))
            }
        }
    }
}

/// Runs the selector over a whole stream.
pub fn select_keyframes<I>(frames: I, cfg: &KeyframeConfig) -> Result<Vec<Keyframe>, KeyframeError>
where
    I: IntoIterator<Item = FeatureSet>,
{
    let mut selector = KeyframeSelector::new(*cfg);
    let mut out = Vec::new();
    for fs in frames {
        if let Some(kf) = selector.push(fs)? {
            out.push(kf);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::features::FingerState;

    pub(crate) fn features_at(t_us: u64, center: (f64, f64), index_dir: Compass8) -> FeatureSet {
        let mut fingers = FingerId::ALL.map(|finger| FingerState {
            finger,
            extended: false,
            direction: None,
            curl_deg: 150.0,
        });
        fingers[1] = FingerState {
            finger: FingerId::Index,
            extended: true,
            direction: Some(Heading {
                angle_deg: 45.0 * index_dir.ordinal() as f64,
                bucket: index_dir,
            }),
            curl_deg: 0.0,
        };
        FeatureSet {
            fingers,
            groups: vec![vec![FingerId::Index]],
            handedness: Handedness::Right,
            hand_center: center,
            wrist: (center.0, center.1 + 0.1),
            hand_size: 0.1,
            source_timestamp_us: t_us,
        }
    }

    #[test]
    fn quiet_frame_is_not_a_keyframe() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(0, (0.5, 0.5), Compass8::N));
        let cand = features_at(10_000, (0.505, 0.5), Compass8::N);
        assert_eq!(is_keyframe(&last, &cand, &cfg).unwrap(), None);
    }

    #[test]
    fn bucket_change_is_feature_change() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(0, (0.5, 0.5), Compass8::N));
        let cand = features_at(10_000, (0.5, 0.5), Compass8::NE);
        assert_eq!(
            is_keyframe(&last, &cand, &cfg).unwrap(),
            Some(KeyframeReason::FeatureChange)
        );
    }

    #[test]
    fn wrist_travel_beyond_half_palm_is_displacement() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(0, (0.5, 0.5), Compass8::N));
        let cand = features_at(10_000, (0.56, 0.5), Compass8::N);
        let moved = (cand.wrist.0 - last.features.wrist.0).hypot(cand.wrist.1 - last.features.wrist.1);
        assert!((moved / last.features.hand_size - 0.6).abs() < 1e-9);
        assert_eq!(
            is_keyframe(&last, &cand, &cfg).unwrap(),
            Some(KeyframeReason::Displacement)
        );
    }

    #[test]
    fn elapsed_second_is_timeout() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(0, (0.5, 0.5), Compass8::N));
        assert_eq!(
            is_keyframe(&last, &features_at(999_999, (0.5, 0.5), Compass8::N), &cfg).unwrap(),
            None
        );
        assert_eq!(
            is_keyframe(&last, &features_at(1_000_000, (0.5, 0.5), Compass8::N), &cfg).unwrap(),
            Some(KeyframeReason::Timeout)
        );
    }

    #[test]
    fn timestamps_must_increase() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(100, (0.5, 0.5), Compass8::N));
        let err = is_keyframe(&last, &features_at(100, (0.5, 0.5), Compass8::N), &cfg).unwrap_err();
        assert_eq!(
            err,
            KeyframeError::NonMonotonicTimestamp {
                last_us: 100,
                candidate_us: 100
            }
        );
        assert!(trajectory_segment(&last, &features_at(50, (0.5, 0.5), Compass8::N), &cfg).is_err());
    }

    #[test]
    fn segment_bands() {
        let cfg = KeyframeConfig::default();
        let last = Keyframe::first(features_at(0, (0.5, 0.5), Compass8::N));

        let seg = trajectory_segment(&last, &features_at(1, (0.5, 0.5), Compass8::N), &cfg).unwrap();
        assert_eq!((seg.direction, seg.magnitude_class, seg.displacement), (None, MagnitudeClass::Still, 0.0));

        let seg = trajectory_segment(&last, &features_at(500_000, (0.56, 0.5), Compass8::N), &cfg).unwrap();
        assert_eq!(seg.direction, Some(Compass8::E));
        assert_eq!(seg.magnitude_class, MagnitudeClass::Medium);
        assert!((seg.displacement - 0.6).abs() < 1e-9);
        assert_eq!(seg.duration_us, 500_000);

        assert_eq!(MagnitudeClass::classify(0.5, &cfg), MagnitudeClass::Medium);
        assert_eq!(MagnitudeClass::classify(0.1, &cfg), MagnitudeClass::Small);
        assert_eq!(MagnitudeClass::classify(1.5, &cfg), MagnitudeClass::Large);
        assert_eq!(MagnitudeClass::classify(0.0999, &cfg), MagnitudeClass::Still);
    }

    #[test]
    fn single_frame_yields_first() {
        let kfs = select_keyframes([features_at(0, (0.5, 0.5), Compass8::N)], &KeyframeConfig::default()).unwrap();
        assert_eq!(kfs.len(), 1);
        assert_eq!(kfs[0].reason, KeyframeReason::First);
        assert!(kfs[0].incoming.is_none());
    }

    #[test]
    fn selector_rejects_regressions_even_between_keyframes() {
        let mut sel = KeyframeSelector::new(KeyframeConfig::default());
        sel.push(features_at(0, (0.5, 0.5), Compass8::N)).unwrap();
        sel.push(features_at(20, (0.5, 0.5), Compass8::N)).unwrap();
        assert!(sel.push(features_at(10, (0.5, 0.5), Compass8::N)).is_err());
    }
}
