//! Frame ingest, interpretation with the recognition cache, and the
//! offline replay engine that ties everything to a robot.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::cache::{embed, CacheEntry, CacheMode, RecognitionCache, DEFAULT_THRESHOLD};
use crate::context::{render_context, ContextDocument, KeyframeWindow, DEFAULT_WINDOW};
use crate::features::{extract_features, FeatureConfig, FeatureSet};
use crate::gateway::{Gateway, GestureInterpretation, InterpretationFailed};
use crate::keyframe::{Keyframe, KeyframeConfig, KeyframeError, KeyframeReason, KeyframeSelector};
use crate::landmark::{accept_frame, parse_frame, FrameError, GeometryError, LandmarkFrame};
use crate::router::{decide, Ack, Command, CommandDecision, DispatchError, RobotAdapter, TaskRegistry};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub min_confidence: f64,
    /// Keyframes kept in the interpretation window.
    pub window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Keyframe(#[from] KeyframeError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineCounters {
    pub accepted: u64,
    pub rejected: u64,
    pub keyframes: u64,
}

#[derive(Debug, Clone)]
pub enum FrameOutcome {
    /// Below the confidence gate.
    Rejected { timestamp_us: u64, confidence: f64 },
    Accepted {
        features: FeatureSet,
        keyframe: Option<Keyframe>,
    },
}

/// parse → accept → extract → keyframe → window, for one hand stream.
#[derive(Debug, Clone)]
pub struct FramePipeline {
    cfg: PipelineConfig,
    features: FeatureConfig,
    selector: KeyframeSelector,
    window: KeyframeWindow,
    counters: PipelineCounters,
}

impl FramePipeline {
    pub fn new(cfg: PipelineConfig, features: FeatureConfig, keyframes: KeyframeConfig) -> Self {
        Self {
            cfg,
            features,
            selector: KeyframeSelector::new(keyframes),
            window: KeyframeWindow::new(cfg.window.max(1)),
            counters: PipelineCounters::default(),
        }
    }

    pub fn ingest_line(&mut self, line: &str) -> Result<FrameOutcome, PipelineError> {
        let frame = parse_frame(line)?;
        self.ingest(&frame)
    }

    pub fn ingest(&mut self, frame: &LandmarkFrame) -> Result<FrameOutcome, PipelineError> {
        if !accept_frame(frame, self.cfg.min_confidence) {
            self.counters.rejected += 1;
            return Ok(FrameOutcome::Rejected {
                timestamp_us: frame.timestamp_us(),
                confidence: frame.confidence(),
            });
        }
        let features = extract_features(frame, &self.features)?;
        let keyframe = self.selector.push(features.clone())?;
        self.counters.accepted += 1;
        if let Some(kf) = &keyframe {
            self.counters.keyframes += 1;
            self.window.push(kf.clone());
        }
        Ok(FrameOutcome::Accepted { features, keyframe })
    }

    /// Context for the current window, if any keyframe has been emitted.
    pub fn context(&self) -> Option<ContextDocument> {
        render_context(&self.window.to_vec()).ok()
    }

    pub fn counters(&self) -> PipelineCounters {
        self.counters
    }
}

/// Summary of a served cache hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHitSummary {
    pub cosine: f64,
    pub name: String,
    pub task: String,
    pub hit_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpreted {
    pub interpretation: GestureInterpretation,
    pub cache_hit: Option<CacheHitSummary>,
}

/// Gateway plus the recognition cache in front of it.
#[derive(Debug, Clone)]
pub struct Interpreter {
    gateway: Arc<Gateway>,
    cache: Option<Arc<RecognitionCache>>,
    mode: CacheMode,
    threshold: f64,
}

impl Interpreter {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self {
            gateway,
            cache: None,
            mode: CacheMode::Off,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_cache(mut self, cache: Arc<RecognitionCache>, mode: CacheMode, threshold: f64) -> Self {
        self.cache = Some(cache);
        self.mode = mode;
        self.threshold = threshold;
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn cache(&self) -> Option<&RecognitionCache> {
        self.cache.as_deref()
    }

    pub fn interpret(&self, ctx: &ContextDocument) -> Result<Interpreted, InterpretationFailed> {
        let cache = match (&self.cache, self.mode) {
            (Some(c), CacheMode::Bypass | CacheMode::Augment) => c,
            _ => {
                return Ok(Interpreted {
                    interpretation: self.gateway.interpret(ctx)?,
                    cache_hit: None,
                })
            }
        };
        let vector = match embed(ctx) {
            Ok(v) => v,
            Err(e) => {
                warn!(error = %e, "context not cacheable");
                return Ok(Interpreted {
                    interpretation: self.gateway.interpret(ctx)?,
                    cache_hit: None,
                });
            }
        };
        if let Some(hit) = cache.lookup(&vector, self.threshold) {
            return Ok(Interpreted {
                interpretation: hit.entry.interpretation(),
                cache_hit: Some(CacheHitSummary {
                    cosine: hit.cosine,
                    name: hit.entry.name.clone(),
                    task: hit.entry.task_text.clone(),
                    hit_count: hit.entry.hit_count,
                }),
            });
        }
        let exemplar = match self.mode {
            CacheMode::Augment => cache.nearest(&vector).map(|h| h.entry.exemplar()),
            _ => None,
        };
        let interpretation = self.gateway.interpret_with_exemplar(ctx, exemplar.as_deref())?;
        match CacheEntry::new(ctx, &interpretation) {
            Ok(entry) => {
                if let Err(e) = cache.insert(entry) {
                    warn!(error = %e, "cache insert failed");
                }
            }
            Err(e) => warn!(error = %e, "cache entry rejected"),
        }
        Ok(Interpreted {
            interpretation,
            cache_hit: None,
        })
    }
}

/// Whether decided commands wait for an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DispatchMode {
    #[serde(rename = "auto")]
    AutoDispatch,
    #[default]
    #[serde(rename = "confirm")]
    ConfirmRequired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DispatchOutcome {
    Done { ack: Ack },
    Failed { command: Command, error: DispatchError },
}

/// One line of the replay command log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLogRecord {
    pub t_us: u64,
    pub keyframe: u64,
    pub reason: KeyframeReason,
    pub name: String,
    pub meaning: String,
    pub task: String,
    pub source: crate::gateway::BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_cosine: Option<f64>,
    pub decision: CommandDecision,
    pub dispatched: Vec<DispatchOutcome>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("line {line}: {source}")]
    Data {
        line: usize,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Interpretation(#[from] InterpretationFailed),
}

/// Offline end-to-end run: every keyframe is interpreted, routed and
/// dispatched immediately.
pub struct Engine {
    pipeline: FramePipeline,
    interpreter: Interpreter,
    registry: Arc<TaskRegistry>,
    robot: Box<dyn RobotAdapter>,
}

impl Engine {
    pub fn new(
        pipeline: FramePipeline,
        interpreter: Interpreter,
        registry: Arc<TaskRegistry>,
        robot: Box<dyn RobotAdapter>,
    ) -> Self {
        Self {
            pipeline,
            interpreter,
            registry,
            robot,
        }
    }

    pub fn interpreter(&self) -> &Interpreter {
        &self.interpreter
    }

    /// Runs one NDJSON line. Blank lines are skipped.
    pub fn step(&mut self, line_no: usize, line: &str) -> Result<Option<CommandLogRecord>, EngineError> {
        if line.trim().is_empty() {
            return Ok(None);
        }
        let outcome = self
            .pipeline
            .ingest_line(line)
            .map_err(|source| EngineError::Data { line: line_no, source })?;
        let FrameOutcome::Accepted {
            keyframe: Some(kf), ..
        } = outcome
        else {
            return Ok(None);
        };
        let ctx = self.pipeline.context().expect("window holds the new keyframe");
        let interpreted = self.interpreter.interpret(&ctx)?;
        let interp = &interpreted.interpretation;
        let decision = decide(&interp.task_text, &self.registry, self.interpreter.gateway());
        let dispatched = decision
            .commands()
            .into_iter()
            .map(|command| match self.robot.dispatch(&command) {
                Ok(ack) => DispatchOutcome::Done { ack },
                Err(error) => DispatchOutcome::Failed { command, error },
            })
            .collect();
        Ok(Some(CommandLogRecord {
            t_us: kf.timestamp_us(),
            keyframe: self.pipeline.counters().keyframes,
            reason: kf.reason,
            name: interp.name.clone(),
            meaning: interp.meaning.clone(),
            task: interp.task_text.clone(),
            source: interp.backend,
            cache_cosine: interpreted.cache_hit.map(|h| h.cosine),
            decision,
            dispatched,
        }))
    }

    /// Runs a whole NDJSON session text.
    pub fn replay(&mut self, session: &str) -> Result<Vec<CommandLogRecord>, EngineError> {
        let mut out = Vec::new();
        for (i, line) in session.lines().enumerate() {
            if let Some(rec) = self.step(i + 1, line)? {
                out.push(rec);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::tests::flat_hand;
    use crate::landmark::Handedness;
    use crate::router::MockRobot;

    fn frame(t_us: u64, conf: f64) -> LandmarkFrame {
        LandmarkFrame::new(t_us, Handedness::Right, conf, flat_hand()).unwrap()
    }

    fn pipeline() -> FramePipeline {
        FramePipeline::new(
            PipelineConfig::default(),
            FeatureConfig::default(),
            KeyframeConfig::default(),
        )
    }

    #[test]
    fn low_confidence_frames_are_counted_and_dropped() {
        let mut p = pipeline();
        assert!(matches!(p.ingest(&frame(0, 0.1)).unwrap(), FrameOutcome::Rejected { .. }));
        assert!(matches!(
            p.ingest(&frame(1, 0.5)).unwrap(),
            FrameOutcome::Accepted { keyframe: Some(_), .. }
        ));
        assert_eq!(
            p.counters(),
            PipelineCounters {
                accepted: 1,
                rejected: 1,
                keyframes: 1
            }
        );
    }

    #[test]
    fn malformed_line_is_an_error() {
        assert!(matches!(
            pipeline().ingest_line("{nope"),
            Err(PipelineError::Frame(FrameError::MalformedRecord { .. }))
        ));
    }

    #[test]
    fn warm_cache_skips_backend() {
        let mut p = pipeline();
        p.ingest(&frame(0, 0.9)).unwrap();
        let ctx = p.context().unwrap();
        let cache = Arc::new(RecognitionCache::in_memory());

        let cold = Interpreter::new(Arc::new(Gateway::rules())).with_cache(cache.clone(), CacheMode::Bypass, 0.98);
        let first = cold.interpret(&ctx).unwrap();
        assert!(first.cache_hit.is_none());
        assert_eq!(cold.gateway().backend_calls(), 1);

        let warm = Interpreter::new(Arc::new(Gateway::rules())).with_cache(cache, CacheMode::Bypass, 0.98);
        let second = warm.interpret(&ctx).unwrap();
        assert_eq!(warm.gateway().backend_calls(), 0);
        assert_eq!(second.interpretation.name, first.interpretation.name);
        assert_eq!(second.cache_hit.unwrap().cosine, 1.0);
    }

    #[test]
    fn replay_logs_one_record_per_keyframe() {
        let session: String = (0..40u64)
            .map(|i| frame(i * 100_000, 0.9).to_ndjson() + "\n")
            .collect();
        let registry = Arc::new(TaskRegistry::default());
        let mut engine = Engine::new(
            pipeline(),
            Interpreter::new(Arc::new(Gateway::rules())),
            registry.clone(),
            Box::new(MockRobot::new(&registry)),
        );
        let log = engine.replay(&session).unwrap();
        // First frame plus Timeouts at 1 s, 2 s and 3 s.
        assert_eq!(log.len(), 4);
        assert_eq!(log[0].reason, KeyframeReason::First);
        assert!(log[1..].iter().all(|r| r.reason == KeyframeReason::Timeout));
    }

    #[test]
    fn dispatch_mode_wire_names() {
        assert_eq!(serde_json::to_string(&DispatchMode::AutoDispatch).unwrap(), "\"auto\"");
        assert_eq!(
            serde_json::from_str::<DispatchMode>("\"confirm\"").unwrap(),
            DispatchMode::ConfirmRequired
        );
    }
}
