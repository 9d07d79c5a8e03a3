//! Deterministic text rendering of keyframe windows and the staged prompts
//! built from them.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyframe::{Keyframe, MagnitudeClass};
use crate::landmark::{FingerId, Handedness};

pub const DEFAULT_WINDOW: usize = 4;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("cannot render an empty keyframe window")]
    EmptyWindow,
    #[error("the {stage:?} prompt needs the {missing:?} answer first")]
    MissingPriorAnswer {
        stage: PromptStage,
        missing: PromptStage,
    },
    #[error("prompt template {path}: {source}")]
    Template {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The most recent keyframes, oldest first.
#[derive(Debug, Clone)]
pub struct KeyframeWindow {
    capacity: usize,
    frames: VecDeque<Keyframe>,
}

impl KeyframeWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, keyframe: Keyframe) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(keyframe);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn latest(&self) -> Option<&Keyframe> {
        self.frames.back()
    }

    pub fn to_vec(&self) -> Vec<Keyframe> {
        self.frames.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextDocument {
    pub text: String,
    pub window: Vec<Keyframe>,
    /// Concatenated discrete signatures of the window, oldest first.
    pub signature: String,
}

impl ContextDocument {
    pub fn latest(&self) -> &Keyframe {
        self.window.last().expect("context windows are never empty")
    }
}

fn hand_word(h: Handedness) -> &'static str {
    match h {
        Handedness::Left => "left",
        Handedness::Right => "right",
    }
}

fn list_fingers(fingers: &[FingerId]) -> String {
    let names: Vec<&str> = fingers.iter().map(|f| f.name()).collect();
    match names.split_last() {
        Some((last, rest)) if !rest.is_empty() => format!("{} and {last}", rest.join(", ")),
        _ => names.concat(),
    }
}

fn keyframe_signature(kf: &Keyframe) -> String {
    let mut s = format!("{}|{}", kf.features.handedness.as_str(), kf.signature());
    if let Some(seg) = &kf.incoming {
        let dir = seg.direction.map_or("-", |d| d.code());
        let _ = write!(s, "|{dir}/{}", seg.magnitude_class.word());
    }
    s
}

/// Renders a non-empty, chronologically ordered window.
pub fn render_context(window: &[Keyframe]) -> Result<ContextDocument, ContextError> {
    if window.is_empty() {
        return Err(ContextError::EmptyWindow);
    }
    let total = window.len();
    let mut text = String::new();
    for (k, kf) in window.iter().enumerate() {
        if k > 0 {
            text.push('\n');
        }
        let sig = kf.signature();
        let _ = writeln!(text, "Keyframe {} of {total}:", k + 1);
        let _ = writeln!(text, "- hand: {}", hand_word(kf.features.handedness));
        for finger in FingerId::ALL {
            match sig.directions[finger.ordinal()] {
                Some(dir) => {
                    let _ = writeln!(text, "- {finger}: extended, pointing {}", dir.word());
                }
                None => {
                    let _ = writeln!(text, "- {finger}: folded into the fist");
                }
            }
        }
        for group in sig.multi_groups() {
            let _ = writeln!(text, "- fingers {} are held together", list_fingers(group));
        }
        if let Some(seg) = &kf.incoming {
            match (seg.magnitude_class, seg.direction) {
                (MagnitudeClass::Still, _) | (_, None) => text.push_str("- hand stayed still\n"),
                (class, Some(dir)) => {
                    let _ = writeln!(
                        text,
                        "- hand moved {}, {} distance ({:.2} hand widths)",
                        dir.word(),
                        class.word(),
                        seg.displacement
                    );
                }
            }
        }
    }
    let signature = window
        .iter()
        .map(keyframe_signature)
        .collect::<Vec<_>>()
        .join(";");
    Ok(ContextDocument {
        text,
        window: window.to_vec(),
        signature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStage {
    Name,
    Meaning,
    Task,
}

impl PromptStage {
    pub const CHAIN: [PromptStage; 3] = [PromptStage::Name, PromptStage::Meaning, PromptStage::Task];

    fn required(self) -> &'static [PromptStage] {
        match self {
            Self::Name => &[],
            Self::Meaning => &[Self::Name],
            Self::Task => &[Self::Name, Self::Meaning],
        }
    }
}

/// Answers collected so far in the chain, plus an optional few-shot
/// exemplar block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorAnswers {
    pub name: Option<String>,
    pub meaning: Option<String>,
    pub exemplar: Option<String>,
}

impl PriorAnswers {
    fn get(&self, stage: PromptStage) -> Option<&str> {
        match stage {
            PromptStage::Name => self.name.as_deref(),
            PromptStage::Meaning => self.meaning.as_deref(),
            PromptStage::Task => None,
        }
    }
}

pub const TEMPLATE_VERSION: &str = "v1";

/// The prompt template set. Slots are written `{slot}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub version: String,
    pub name: String,
    pub meaning: String,
    pub task: String,
    pub direct: String,
    pub explain: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            version: TEMPLATE_VERSION.to_string(),
            name: include_str!("../assets/prompts/name.txt").to_string(),
            meaning: include_str!("../assets/prompts/meaning.txt").to_string(),
            task: include_str!("../assets/prompts/task.txt").to_string(),
            direct: include_str!("../assets/prompts/direct.txt").to_string(),
            explain: include_str!("../assets/prompts/explain.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads overrides from `dir`; files that are absent keep the shipped text.
    pub fn load_overrides(dir: &Path) -> Result<Self, ContextError> {
        let mut t = Self {
            version: format!("custom:{}", dir.display()),
            ..Self::default()
        };
        for (file, slot) in [
            ("name.txt", &mut t.name),
            ("meaning.txt", &mut t.meaning),
            ("task.txt", &mut t.task),
            ("direct.txt", &mut t.direct),
            ("explain.txt", &mut t.explain),
        ] {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(ContextError::Template {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(t)
    }

    fn stage_template(&self, stage: PromptStage) -> &str {
        match stage {
            PromptStage::Name => &self.name,
            PromptStage::Meaning => &self.meaning,
            PromptStage::Task => &self.task,
        }
    }

    /// Fills one chain stage.
    pub fn render_prompt(
        &self,
        stage: PromptStage,
        ctx: &ContextDocument,
        prior: &PriorAnswers,
    ) -> Result<String, ContextError> {
        for &missing in stage.required() {
            if prior.get(missing).is_none() {
                return Err(ContextError::MissingPriorAnswer { stage, missing });
            }
        }
        Ok(fill_slots(self.stage_template(stage), &slot_values(ctx, prior)))
    }

    /// The single-prompt variant that asks for the task directly.
    pub fn render_direct(&self, ctx: &ContextDocument, prior: &PriorAnswers) -> String {
        fill_slots(&self.direct, &slot_values(ctx, prior))
    }
}

fn slot_values<'a>(ctx: &'a ContextDocument, prior: &'a PriorAnswers) -> HashMap<&'static str, &'a str> {
    let mut slots = HashMap::new();
    slots.insert("context", ctx.text.trim_end());
    slots.insert("exemplar", prior.exemplar.as_deref().unwrap_or(""));
    if let Some(name) = &prior.name {
        slots.insert("name", name.as_str());
    }
    if let Some(meaning) = &prior.meaning {
        slots.insert("meaning", meaning.as_str());
    }
    slots
}

/// Single-pass `{slot}` substitution; unknown slots are left verbatim, and
/// substituted text is never re-scanned.
pub fn fill_slots(template: &str, values: &HashMap<&str, &str>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close)
                if after[..close]
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_') =>
            {
                let key = &after[..close];
                match values.get(key) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
