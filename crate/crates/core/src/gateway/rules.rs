use serde::{Deserialize, Serialize};

use super::{BackendKind, CompletionBackend, GestureInterpretation};
use crate::context::ContextDocument;
use crate::features::Signature;
use crate::landmark::FingerId;

/// Gestures the rule backend knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleGesture {
    VulcanSalute,
    ShakaSign,
    FingerGun,
    SignOfTheHorns,
    OpenPalm,
    Fist,
    Unknown,
}

impl RuleGesture {
    pub const KNOWN: [RuleGesture; 6] = [
        RuleGesture::VulcanSalute,
        RuleGesture::ShakaSign,
        RuleGesture::FingerGun,
        RuleGesture::SignOfTheHorns,
        RuleGesture::OpenPalm,
        RuleGesture::Fist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::VulcanSalute => "Vulcan salute",
            Self::ShakaSign => "shaka sign",
            Self::FingerGun => "finger gun",
            Self::SignOfTheHorns => "sign of the horns",
            Self::OpenPalm => "open palm",
            Self::Fist => "fist",
            Self::Unknown => "unknown gesture",
        }
    }

    /// Corpus directory label.
    pub fn label(self) -> &'static str {
        match self {
            Self::VulcanSalute => "vulcan_salute",
            Self::ShakaSign => "shaka_sign",
            Self::FingerGun => "finger_gun",
            Self::SignOfTheHorns => "sign_of_the_horns",
            Self::OpenPalm => "open_palm",
            Self::Fist => "fist",
            Self::Unknown => "unknown_gesture",
        }
    }

    pub fn meaning(self) -> &'static str {
        match self {
            Self::VulcanSalute => "a greeting that wishes a long and prosperous life",
            Self::ShakaSign => "hang loose, everything is fine and relaxed",
            Self::FingerGun => "pointing at a target to single it out",
            Self::SignOfTheHorns => "enthusiastic approval, rock on",
            Self::OpenPalm => "halt, stop what you are doing",
            Self::Fist => "hold firm and return to the starting position",
            Self::Unknown => "the hand configuration does not match a known gesture",
        }
    }

    pub fn task(self) -> &'static str {
        match self {
            Self::VulcanSalute => "activate program greeting",
            Self::ShakaSign => "draw a circle",
            Self::FingerGun => "push the red cube",
            Self::SignOfTheHorns => "draw a line",
            Self::OpenPalm => "stop",
            Self::Fist => "go to the home position",
            Self::Unknown => "no task",
        }
    }

    /// Whether `sig` satisfies this gesture's rule.
    pub fn matches(self, sig: &Signature) -> bool {
        use FingerId::*;
        let ext = |f: FingerId| sig.is_extended(f);
        let exactly = |set: &[FingerId]| FingerId::ALL.iter().all(|f| ext(*f) == set.contains(f));
        match self {
            Self::VulcanSalute => {
                exactly(&FingerId::ALL)
                    && sig.groups == vec![vec![Thumb], vec![Index, Middle], vec![Ring, Pinky]]
            }
            Self::ShakaSign => exactly(&[Thumb, Pinky]) && sig.groups.iter().all(|g| g.len() == 1),
            Self::FingerGun => exactly(&[Thumb, Index]),
            Self::SignOfTheHorns => ext(Index) && ext(Pinky) && !ext(Middle) && !ext(Ring),
            Self::OpenPalm => exactly(&FingerId::ALL) && sig.groups.iter().all(|g| g.len() == 1),
            Self::Fist => exactly(&[]),
            Self::Unknown => !Self::KNOWN.iter().any(|g| g.matches(sig)),
        }
    }

    pub fn classify(sig: &Signature) -> Self {
        Self::KNOWN
            .into_iter()
            .find(|g| g.matches(sig))
            .unwrap_or(Self::Unknown)
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::KNOWN
            .into_iter()
            .chain([Self::Unknown])
            .find(|g| g.label() == label)
    }
}

/// Deterministic interpretation from the latest keyframe's signature.
pub fn rule_interpret(ctx: &ContextDocument) -> GestureInterpretation {
    let gesture = RuleGesture::classify(&ctx.latest().signature());
    GestureInterpretation {
        name: gesture.name().to_string(),
        meaning: gesture.meaning().to_string(),
        task_text: gesture.task().to_string(),
        backend: BackendKind::Rules,
        latency_us: Vec::new(),
    }
}

/// Offline backend built from [`rule_interpret`]. Raw completions (as used
/// by the command explainer) always answer `none`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBackend;

impl CompletionBackend for RuleBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Rules
    }

    fn complete(&self, _prompt: &str) -> Result<String, super::BackendError> {
        Ok("none".to_string())
    }

    fn interpret_directly(&self, ctx: &ContextDocument) -> Option<GestureInterpretation> {
        Some(rule_interpret(ctx))
    }

    fn is_local(&self) -> bool {
        true
    }
}
