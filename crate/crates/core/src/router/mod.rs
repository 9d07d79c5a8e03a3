//! Task text → robot commands: a registry classifier, an LLM-backed
//! explainer for everything else, and dispatch to a robot adapter.

mod robot;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::context::fill_slots;
use crate::gateway::{BackendError, Gateway};

pub use robot::{Ack, DispatchError, MockRobot, RobotAdapter, RobotState};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("registry parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate task name after normalization: {0:?}")]
    DuplicateTask(String),
    #[error("empty task name")]
    EmptyTask,
    #[error("invalid workspace box: min must not exceed max")]
    InvalidWorkspace,
    #[error("speed and acceleration caps must be positive")]
    InvalidLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Red => "red",
            Self::Green => "green",
            Self::Blue => "blue",
            Self::Yellow => "yellow",
        }
    }
}

impl FromStr for Color {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Line,
}

impl FromStr for Shape {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "circle" => Ok(Self::Circle),
            "line" => Ok(Self::Line),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Target in meters, robot frame.
    MoveTo { x: f64, y: f64, z: f64 },
    PushObject { color: Color },
    DrawFigure { shape: Shape },
    ActivateProgram { id: String },
    Stop,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MoveTo { x, y, z } => write!(f, "move to {x} {y} {z}"),
            Self::PushObject { color } => write!(f, "push the {} cube", color.as_str()),
            Self::DrawFigure { shape: Shape::Circle } => f.write_str("draw a circle"),
            Self::DrawFigure { shape: Shape::Line } => f.write_str("draw a line"),
            Self::ActivateProgram { id } => write!(f, "activate program {id}"),
            Self::Stop => f.write_str("stop"),
        }
    }
}

/// A template value: either fixed in the registry or taken from the
/// words following the matched phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slot<T> {
    Arg(ArgMarker),
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgMarker {
    #[serde(rename = "$arg")]
    Arg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandTemplate {
    MoveTo { x: Slot<f64>, y: Slot<f64>, z: Slot<f64> },
    PushObject { color: Slot<Color> },
    DrawFigure { shape: Slot<Shape> },
    ActivateProgram { id: Slot<String> },
    Stop,
}

/// Consumes argument tokens in order.
struct Args<'a> {
    tokens: &'a [String],
}

impl Args<'_> {
    fn take<T: FromStr>(&mut self, slot: &Slot<T>) -> Option<T>
    where
        T: Clone,
    {
        match slot {
            Slot::Fixed(v) => Some(v.clone()),
            Slot::Arg(_) => {
                let (first, rest) = self.tokens.split_first()?;
                let v = first.parse().ok()?;
                self.tokens = rest;
                Some(v)
            }
        }
    }
}

impl CommandTemplate {
    fn instantiate(&self, following: &[String]) -> Option<Command> {
        let mut args = Args { tokens: following };
        Some(match self {
            Self::MoveTo { x, y, z } => {
                let x = args.take(x)?;
                let y = args.take(y)?;
                let z = args.take(z)?;
                Command::MoveTo { x, y, z }
            }
            Self::PushObject { color } => Command::PushObject {
                color: args.take(color)?,
            },
            Self::DrawFigure { shape } => Command::DrawFigure {
                shape: args.take(shape)?,
            },
            Self::ActivateProgram { id } => Command::ActivateProgram {
                id: args.take(id)?,
            },
            Self::Stop => Command::Stop,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task_name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    pub command: CommandTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBox {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i].is_finite() && self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| p[i].clamp(self.min[i], self.max[i]))
    }
}

/// Supported tasks plus the robot's operating limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRegistry {
    pub workspace: WorkspaceBox,
    /// Meters per second.
    pub max_speed: f64,
    /// Meters per second squared.
    pub max_accel: f64,
    pub home: [f64; 3],
    #[serde(default)]
    pub objects: BTreeMap<Color, [f64; 3]>,
    pub tasks: Vec<TaskEntry>,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        Self::from_json(include_str!("../../assets/registry.json")).expect("shipped registry is valid")
    }
}

impl TaskRegistry {
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let reg: Self = serde_json::from_str(text)?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let mut seen = HashSet::new();
        for entry in &self.tasks {
            let key = normalize_text(&entry.task_name);
            if key.is_empty() {
                return Err(RegistryError::EmptyTask);
            }
            if !seen.insert(key.clone()) {
                return Err(RegistryError::DuplicateTask(key));
            }
        }
        if (0..3).any(|i| self.workspace.min[i] > self.workspace.max[i]) {
            return Err(RegistryError::InvalidWorkspace);
        }
        if !(self.max_speed > 0.0 && self.max_accel > 0.0) {
            return Err(RegistryError::InvalidLimits);
        }
        Ok(())
    }

    /// Whether a command can be executed at all under these limits.
    pub fn check(&self, cmd: &Command) -> Result<(), String> {
        match cmd {
            Command::MoveTo { x, y, z } if !self.workspace.contains([*x, *y, *z]) => {
                Err(format!("workspace violation: target ({x}, {y}, {z}) is outside the workspace"))
            }
            Command::ActivateProgram { id } if id.trim().is_empty() => {
                Err("program id is empty".to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Lowercases, trims and collapses inner whitespace.
pub fn normalize_text(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Whitespace tokens with surrounding punctuation removed. Leading `-` and
/// `.` survive so signed decimals stay intact.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.to_lowercase()
                .trim_start_matches(|c: char| !(c.is_alphanumeric() || c == '-' || c == '.'))
                .trim_end_matches(|c: char| !c.is_alphanumeric())
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn occurrences<'a>(haystack: &'a [String], needle: &'a [String]) -> impl Iterator<Item = usize> + 'a {
    let n = needle.len();
    (0..haystack.len().saturating_sub(n.saturating_sub(1)))
        .filter(move |&i| n > 0 && haystack[i..i + n] == *needle)
}

/// First registry entry (in registry order) whose name or synonym occurs as
/// whole words in the text and whose argument slots can be filled.
pub fn classify(task_text: &str, registry: &TaskRegistry) -> Option<(Command, String)> {
    let tokens = tokenize(task_text);
    for entry in &registry.tasks {
        for phrase in std::iter::once(&entry.task_name).chain(&entry.synonyms) {
            let needle = tokenize(phrase);
            for at in occurrences(&tokens, &needle) {
                if let Some(cmd) = entry.command.instantiate(&tokens[at + needle.len()..]) {
                    return Some((cmd, entry.task_name.clone()));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandDecision {
    Classified {
        command: Command,
        matched_task: String,
    },
    /// Never empty.
    Explained { commands: Vec<Command> },
    Rejected {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cause: Option<BackendError>,
    },
}

impl CommandDecision {
    pub fn rejected(reason: impl Into<String>) -> Self {
        Self::Rejected {
            reason: reason.into(),
            cause: None,
        }
    }

    /// Commands to dispatch, in order.
    pub fn commands(&self) -> Vec<Command> {
        match self {
            Self::Classified { command, .. } => vec![command.clone()],
            Self::Explained { commands } => commands.clone(),
            Self::Rejected { .. } => Vec::new(),
        }
    }
}

pub const NO_DECOMPOSITION: &str = "no executable decomposition";

/// Renders the explainer prompt for a task.
pub fn explain_prompt(task_text: &str, registry: &TaskRegistry, template: &str) -> String {
    let ws = registry.workspace;
    let bounds: Vec<String> = ws.min.iter().chain(&ws.max).map(|v| v.to_string()).collect();
    let mut slots: HashMap<&str, &str> = HashMap::new();
    slots.insert("task", task_text);
    for (k, key) in ["x_min", "y_min", "z_min", "x_max", "y_max", "z_max"].into_iter().enumerate() {
        slots.insert(key, &bounds[k]);
    }
    fill_slots(template, &slots)
}

/// Asks the backend to break `task_text` into commands.
pub fn explain(task_text: &str, registry: &TaskRegistry, gateway: &Gateway) -> CommandDecision {
    let prompt = explain_prompt(task_text, registry, &gateway.templates().explain);
    let answer = match gateway.complete(&prompt) {
        Ok(a) => a,
        Err(cause) => {
            return CommandDecision::Rejected {
                reason: format!("explainer failed: {cause}"),
                cause: Some(cause),
            }
        }
    };
    let mut commands = Vec::new();
    for line in answer.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match classify(line, registry) {
            Some((cmd, _)) => match registry.check(&cmd) {
                Ok(()) => commands.push(cmd),
                Err(why) => warn!(line, why, "dropping invalid explained command"),
            },
            None => warn!(line, "dropping unparseable explainer line"),
        }
    }
    if commands.is_empty() {
        CommandDecision::rejected(NO_DECOMPOSITION)
    } else {
        CommandDecision::Explained { commands }
    }
}

/// Classifier first, explainer as fallback. Always yields exactly one
/// decision.
pub fn decide(task_text: &str, registry: &TaskRegistry, gateway: &Gateway) -> CommandDecision {
    match classify(task_text, registry) {
        Some((command, matched_task)) => match registry.check(&command) {
            Ok(()) => CommandDecision::Classified {
                command,
                matched_task,
            },
            Err(why) => CommandDecision::rejected(why),
        },
        None => explain(task_text, registry, gateway),
    }
}
