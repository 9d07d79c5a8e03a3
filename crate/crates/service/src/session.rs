//! One actor task per session. Everything that touches session state runs
//! on that task, so event order is the order of its mailbox.

use std::collections::VecDeque;
use std::sync::Arc;

use handcue_core::config::Settings;
use handcue_core::gateway::InterpretationFailed;
use handcue_core::landmark::parse_frame;
use handcue_core::pipeline::{
    DispatchMode, FrameOutcome, FramePipeline, Interpreted, Interpreter, PipelineError,
};
use handcue_core::router::{decide, Command, CommandDecision, MockRobot, RobotAdapter, TaskRegistry};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};
use tracing::{debug, warn};

use crate::event::{Event, EventKind, Stage};

/// Events kept for late subscribers asking for a replay.
pub const HISTORY: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("unknown command id {0}")]
    UnknownCommandId(String),
    #[error("session is closed")]
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Confirm,
    Override(Command),
    Reject,
}

/// Whether a frames connection may keep sending.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFlow {
    Continue,
    Close,
}

type Outcome = Result<(Interpreted, CommandDecision), InterpretationFailed>;

enum Msg {
    Frame {
        line: String,
        reply: oneshot::Sender<FrameFlow>,
    },
    Resolve {
        cmd_id: String,
        verdict: Verdict,
        reply: oneshot::Sender<Result<Event, SessionError>>,
    },
    Subscribe {
        since: Option<u64>,
        reply: oneshot::Sender<mpsc::UnboundedReceiver<Event>>,
    },
    Interpreted(Outcome),
}

/// What every session shares: configuration, the interpreter (and thus the
/// cache and backend) and the task registry.
pub struct Shared {
    pub settings: Settings,
    pub interpreter: Arc<Interpreter>,
    pub registry: Arc<TaskRegistry>,
}

#[derive(Debug, Clone)]
pub struct SessionHandle {
    pub id: String,
    pub mode: DispatchMode,
    tx: mpsc::Sender<Msg>,
}

impl SessionHandle {
    pub fn spawn(id: String, mode: DispatchMode, shared: Arc<Shared>) -> Self {
        let (tx, rx) = mpsc::channel(256);
        let actor = Actor {
            id: id.clone(),
            mode,
            pipeline: shared.settings.frame_pipeline(),
            robot: Box::new(MockRobot::new(&shared.registry)),
            shared,
            pending: Vec::new(),
            next_cmd: 1,
            seq: 0,
            history: VecDeque::new(),
            subscribers: Vec::new(),
            in_flight: false,
            mailbox: tx.downgrade(),
        };
        tokio::spawn(actor.run(rx));
        Self { id, mode, tx }
    }

    /// Feeds one NDJSON record.
    pub async fn ingest(&self, line: String) -> Result<FrameFlow, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.send(Msg::Frame { line, reply }).await?;
        rx.await.map_err(|_| SessionError::Closed)
    }

    pub async fn resolve(&self, cmd_id: String, verdict: Verdict) -> Result<Event, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.send(Msg::Resolve { cmd_id, verdict, reply }).await?;
        rx.await.map_err(|_| SessionError::Closed)?
    }

    /// Live events from now on; with `since`, retained events after that
    /// sequence number come first.
    pub async fn subscribe(&self, since: Option<u64>) -> Result<mpsc::UnboundedReceiver<Event>, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.send(Msg::Subscribe { since, reply }).await?;
        rx.await.map_err(|_| SessionError::Closed)
    }

    async fn send(&self, msg: Msg) -> Result<(), SessionError> {
        self.tx.send(msg).await.map_err(|_| SessionError::Closed)
    }
}

struct Actor {
    id: String,
    mode: DispatchMode,
    shared: Arc<Shared>,
    pipeline: FramePipeline,
    robot: Box<dyn RobotAdapter>,
    pending: Vec<(String, CommandDecision)>,
    next_cmd: u64,
    seq: u64,
    history: VecDeque<Event>,
    subscribers: Vec<mpsc::UnboundedSender<Event>>,
    in_flight: bool,
    mailbox: mpsc::WeakSender<Msg>,
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::Receiver<Msg>) {
        while let Some(msg) = rx.recv().await {
            match msg {
                Msg::Frame { line, reply } => {
                    let flow = self.frame(&line);
                    let _ = reply.send(flow);
                }
                Msg::Resolve { cmd_id, verdict, reply } => {
                    let _ = reply.send(self.resolve(&cmd_id, verdict));
                }
                Msg::Subscribe { since, reply } => {
                    let (tx, rx) = mpsc::unbounded_channel();
                    if let Some(since) = since {
                        for e in self.history.iter().filter(|e| e.seq > since) {
                            let _ = tx.send(e.clone());
                        }
                    }
                    self.subscribers.push(tx);
                    let _ = reply.send(rx);
                }
                Msg::Interpreted(outcome) => {
                    self.in_flight = false;
                    self.interpreted(outcome);
                }
            }
        }
        debug!(session = %self.id, "session actor stopped");
    }

    fn emit(&mut self, kind: EventKind) -> Event {
        self.seq += 1;
        let event = Event {
            session: self.id.clone(),
            seq: self.seq,
            kind,
        };
        if self.history.len() == HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(event.clone());
        self.subscribers.retain(|s| s.send(event.clone()).is_ok());
        event
    }

    fn error(&mut self, stage: Stage, cause: impl ToString) -> Event {
        self.emit(EventKind::Error {
            stage,
            cause: cause.to_string(),
        })
    }

    fn frame(&mut self, line: &str) -> FrameFlow {
        let frame = match parse_frame(line) {
            Ok(f) => f,
            Err(e) => {
                self.error(Stage::Parse, e);
                return FrameFlow::Continue;
            }
        };
        match self.pipeline.ingest(&frame) {
            Ok(FrameOutcome::Rejected { timestamp_us, confidence }) => {
                let min = self.shared.settings.pipeline.min_confidence;
                self.emit(EventKind::FrameRejected {
                    t_us: timestamp_us,
                    reason: format!("confidence {confidence} below {min}"),
                });
            }
            Ok(FrameOutcome::Accepted { features, keyframe }) => {
                self.emit(EventKind::FrameAccepted {
                    t_us: frame.timestamp_us(),
                    points: frame.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
                    signature: features.signature().to_string(),
                });
                if let Some(kf) = keyframe {
                    self.emit(EventKind::KeyframeEmitted { keyframe: kf.record() });
                    self.keyframe();
                }
            }
            Err(PipelineError::Keyframe(e)) => {
                self.error(Stage::Keyframe, e);
                return FrameFlow::Close;
            }
            Err(PipelineError::Geometry(e)) => {
                self.error(Stage::Geometry, e);
            }
            Err(PipelineError::Frame(e)) => {
                self.error(Stage::Parse, e);
            }
        }
        FrameFlow::Continue
    }

    fn keyframe(&mut self) {
        if self.in_flight {
            debug!(session = %self.id, "interpretation in flight, keyframe only updates the window");
            return;
        }
        let Some(ctx) = self.pipeline.context() else { return };
        let (interpreter, registry) = (self.shared.interpreter.clone(), self.shared.registry.clone());
        let work = move || -> Outcome {
            let interpreted = interpreter.interpret(&ctx)?;
            let decision = decide(&interpreted.interpretation.task_text, &registry, interpreter.gateway());
            Ok((interpreted, decision))
        };
        // Local backends run inline so a replayed stream yields the same
        // event log every time.
        if self.shared.interpreter.gateway().is_local() {
            let outcome = work();
            self.interpreted(outcome);
            return;
        }
        self.in_flight = true;
        let mailbox = self.mailbox.clone();
        tokio::spawn(async move {
            let outcome = match tokio::task::spawn_blocking(work).await {
                Ok(o) => o,
                Err(e) => {
                    warn!(error = %e, "interpretation task failed");
                    return;
                }
            };
            if let Some(tx) = mailbox.upgrade() {
                let _ = tx.send(Msg::Interpreted(outcome)).await;
            }
        });
    }

    fn interpreted(&mut self, outcome: Outcome) {
        let (interpreted, decision) = match outcome {
            Ok(o) => o,
            Err(e) => {
                self.error(Stage::Interpretation, e);
                return;
            }
        };
        if let Some(entry) = interpreted.cache_hit {
            self.emit(EventKind::CacheHit { entry });
        }
        self.emit(EventKind::InterpretationReady {
            interpretation: interpreted.interpretation,
        });
        if let CommandDecision::Rejected { reason, .. } = &decision {
            self.emit(EventKind::CommandRejected {
                cmd_id: None,
                reason: reason.clone(),
            });
            return;
        }
        let cmd_id = format!("c{}", self.next_cmd);
        self.next_cmd += 1;
        match self.mode {
            DispatchMode::AutoDispatch => {
                self.dispatch(&cmd_id, decision.commands());
            }
            DispatchMode::ConfirmRequired => {
                self.pending.push((cmd_id.clone(), decision.clone()));
                self.emit(EventKind::CommandPending { cmd_id, decision });
            }
        }
    }

    /// Runs commands in order, stopping at the first refusal. Returns the
    /// last event emitted.
    fn dispatch(&mut self, cmd_id: &str, commands: Vec<Command>) -> Event {
        let mut last = None;
        for cmd in commands {
            let result = self
                .shared
                .registry
                .check(&cmd)
                .and_then(|()| self.robot.dispatch(&cmd).map_err(|e| e.to_string()));
            match result {
                Ok(ack) => {
                    last = Some(self.emit(EventKind::CommandDispatched {
                        cmd_id: cmd_id.to_string(),
                        ack,
                    }));
                }
                Err(reason) => {
                    return self.emit(EventKind::CommandRejected {
                        cmd_id: Some(cmd_id.to_string()),
                        reason,
                    });
                }
            }
        }
        last.unwrap_or_else(|| {
            self.emit(EventKind::CommandRejected {
                cmd_id: Some(cmd_id.to_string()),
                reason: "nothing to dispatch".to_string(),
            })
        })
    }

    fn resolve(&mut self, cmd_id: &str, verdict: Verdict) -> Result<Event, SessionError> {
        let at = self
            .pending
            .iter()
            .position(|(id, _)| id == cmd_id)
            .ok_or_else(|| SessionError::UnknownCommandId(cmd_id.to_string()))?;
        let (_, decision) = self.pending.remove(at);
        Ok(match verdict {
            Verdict::Confirm => self.dispatch(cmd_id, decision.commands()),
            Verdict::Override(cmd) => self.dispatch(cmd_id, vec![cmd]),
            Verdict::Reject => self.emit(EventKind::CommandRejected {
                cmd_id: Some(cmd_id.to_string()),
                reason: "rejected by operator".to_string(),
            }),
        })
    }
}
