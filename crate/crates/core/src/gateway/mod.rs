//! The staged Name → Meaning → Task interpretation chain over a pluggable
//! completion backend.

mod remote;
mod rules;
mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{ContextDocument, PriorAnswers, PromptStage, PromptTemplates};

pub use remote::{BackendConfig, ConfigError, RemoteBackend};
pub use rules::{rule_interpret, RuleBackend, RuleGesture};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Rules,
    Cache,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Remote => "remote",
            Self::Rules => "rules",
            Self::Cache => "cache",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: PromptStage,
    pub latency_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureInterpretation {
    pub name: String,
    pub meaning: String,
    pub task_text: String,
    pub backend: BackendKind,
    pub latency_us: Vec<StageLatency>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("rate limited by the backend")]
    RateLimited,
    #[error("backend returned HTTP {0}")]
    HttpStatus(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl BackendError {
    /// Whether a fresh attempt may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Timeout | Self::TransportError(_) | Self::RateLimited => true,
            Self::HttpStatus(code) => *code >= 500,
            Self::MalformedResponse(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("interpretation failed at the {stage:?} stage: {cause}")]
pub struct InterpretationFailed {
    pub stage: PromptStage,
    pub cause: BackendError,
}

/// A text-completion service. Implementations must be shareable between
/// sessions.
pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    /// Backends that interpret the context without prompting override this.
    fn interpret_directly(&self, _ctx: &ContextDocument) -> Option<GestureInterpretation> {
        None
    }

    /// True when calls finish without I/O, so callers may run them inline.
    fn is_local(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    #[default]
    Staged,
    Direct,
}

/// Answer used for name and meaning when the chain runs in direct mode.
pub const DIRECT_MODE_PLACEHOLDER: &str = "unspecified";

pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    templates: PromptTemplates,
    mode: ChainMode,
    calls: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("mode", &self.mode)
            .field("calls", &self.backend_calls())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            templates: PromptTemplates::default(),
            mode: ChainMode::Staged,
            calls: AtomicU64::new(0),
        }
    }

    pub fn rules() -> Self {
        Self::new(Arc::new(RuleBackend))
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_mode(mut self, mode: ChainMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn is_local(&self) -> bool {
        self.backend.is_local()
    }

    /// Number of requests issued to the backend so far.
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// One raw completion.
    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.backend.complete(prompt)
    }

    pub fn interpret(
        &self,
        ctx: &ContextDocument,
    ) -> Result<GestureInterpretation, InterpretationFailed> {
        self.interpret_with_exemplar(ctx, None)
    }

    /// Runs the chain, optionally prepending a few-shot exemplar to every
    /// prompt.
    pub fn interpret_with_exemplar(
        &self,
        ctx: &ContextDocument,
        exemplar: Option<&str>,
    ) -> Result<GestureInterpretation, InterpretationFailed> {
        let started = Instant::now();
        if let Some(interp) = self.backend.interpret_directly(ctx) {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut interp = interp;
            interp.latency_us = vec![StageLatency {
                stage: PromptStage::Name,
                latency_us: started.elapsed().as_micros() as u64,
            }];
            return Ok(interp);
        }

        let mut prior = PriorAnswers {
            exemplar: exemplar.map(|e| format!("{e}\n\n")),
            ..Default::default()
        };
        let mut latency_us = Vec::new();

        if self.mode == ChainMode::Direct {
            let prompt = self.templates.render_direct(ctx, &prior);
            let task_text = self.run_stage(PromptStage::Task, &prompt, &mut latency_us)?;
            return Ok(GestureInterpretation {
                name: DIRECT_MODE_PLACEHOLDER.to_string(),
                meaning: DIRECT_MODE_PLACEHOLDER.to_string(),
                task_text,
                backend: self.backend.kind(),
                latency_us,
            });
        }

        let mut task_text = String::new();
        for stage in PromptStage::CHAIN {
            let prompt = self
                .templates
                .render_prompt(stage, ctx, &prior)
                .expect("chain stages run in order");
            let answer = self.run_stage(stage, &prompt, &mut latency_us)?;
            match stage {
                PromptStage::Name => prior.name = Some(answer),
                PromptStage::Meaning => prior.meaning = Some(answer),
                PromptStage::Task => task_text = answer,
            }
        }
        Ok(GestureInterpretation {
            name: prior.name.unwrap_or_default(),
            meaning: prior.meaning.unwrap_or_default(),
            task_text,
            backend: self.backend.kind(),
            latency_us,
        })
    }

    fn run_stage(
        &self,
        stage: PromptStage,
        prompt: &str,
        latency_us: &mut Vec<StageLatency>,
    ) -> Result<String, InterpretationFailed> {
        let started = Instant::now();
        let result = self.complete(prompt);
        latency_us.push(StageLatency {
            stage,
            latency_us: started.elapsed().as_micros() as u64,
        });
        let raw = result.map_err(|cause| InterpretationFailed { stage, cause })?;
        let answer = clean_answer(&raw);
        if answer.is_empty() {
            return Err(InterpretationFailed {
                stage,
                cause: BackendError::MalformedResponse("empty answer".into()),
            });
        }
        Ok(answer)
    }
}

/// Strips surrounding whitespace and quote characters.
pub fn clean_answer(raw: &str) -> String {
    const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
    let mut s = raw.trim();
    loop {
        let t = s.trim_matches(QUOTES).trim();
        if t.len() == s.len() {
            break;
        }
        s = t;
    }
    s.to_string()
}
