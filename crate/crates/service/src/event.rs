use handcue_core::gateway::GestureInterpretation;
use handcue_core::keyframe::KeyframeRecord;
use handcue_core::pipeline::CacheHitSummary;
use handcue_core::router::{Ack, CommandDecision};
use serde::{Deserialize, Serialize};

/// Pipeline stage an `Error` event comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Geometry,
    Keyframe,
    Interpretation,
    Dispatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventKind {
    FrameAccepted {
        t_us: u64,
        points: Vec<[f64; 3]>,
        signature: String,
    },
    FrameRejected {
        t_us: u64,
        reason: String,
    },
    KeyframeEmitted {
        keyframe: KeyframeRecord,
    },
    CacheHit {
        entry: CacheHitSummary,
    },
    InterpretationReady {
        interpretation: GestureInterpretation,
    },
    CommandPending {
        cmd_id: String,
        decision: CommandDecision,
    },
    CommandDispatched {
        cmd_id: String,
        ack: Ack,
    },
    CommandRejected {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cmd_id: Option<String>,
        reason: String,
    },
    Error {
        stage: Stage,
        cause: String,
    },
}

/// One record on the events stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session: String,
    /// Starts at 1, no gaps.
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FrameAccepted { .. } => "FrameAccepted",
            Self::FrameRejected { .. } => "FrameRejected",
            Self::KeyframeEmitted { .. } => "KeyframeEmitted",
            Self::CacheHit { .. } => "CacheHit",
            Self::InterpretationReady { .. } => "InterpretationReady",
            Self::CommandPending { .. } => "CommandPending",
            Self::CommandDispatched { .. } => "CommandDispatched",
            Self::CommandRejected { .. } => "CommandRejected",
            Self::Error { .. } => "Error",
        }
    }
}
