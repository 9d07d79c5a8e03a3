use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Color, Command, Shape, TaskRegistry, WorkspaceBox};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispatchError {
    #[error("workspace violation: target {target:?} is outside the workspace")]
    WorkspaceViolation { target: [f64; 3] },
    #[error("robot adapter unavailable")]
    AdapterUnavailable,
    #[error("no position configured for the {color:?} object")]
    UnknownObject { color: Color },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: [f64; 3],
    /// Cruise velocity of the most recent motion; zeroed by `Stop`.
    pub velocity: [f64; 3],
    pub active_program: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command: Command,
    pub state: RobotState,
    /// Simulated execution time under the speed and acceleration caps.
    pub duration_s: f64,
    pub peak_speed: f64,
}

/// Anything that can execute commands.
pub trait RobotAdapter: Send {
    fn dispatch(&mut self, cmd: &Command) -> Result<Ack, DispatchError>;
    fn state(&self) -> RobotState;
}

const CIRCLE_RADIUS: f64 = 0.05;
const LINE_LENGTH: f64 = 0.1;
const PUSH_STROKE: f64 = 0.05;

/// First-order kinematic stand-in for a manipulator with a restricted
/// workspace and capped speed and acceleration.
#[derive(Debug, Clone)]
pub struct MockRobot {
    workspace: WorkspaceBox,
    max_speed: f64,
    max_accel: f64,
    objects: std::collections::BTreeMap<Color, [f64; 3]>,
    state: RobotState,
    available: bool,
}

impl MockRobot {
    pub fn new(registry: &TaskRegistry) -> Self {
        Self {
            workspace: registry.workspace,
            max_speed: registry.max_speed,
            max_accel: registry.max_accel,
            objects: registry.objects.clone(),
            state: RobotState {
                pose: registry.workspace.clamp(registry.home),
                velocity: [0.0; 3],
                active_program: None,
            },
            available: true,
        }
    }

    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    pub fn workspace(&self) -> WorkspaceBox {
        self.workspace
    }

    /// Trapezoidal profile: (duration, peak speed) for a straight move.
    fn profile(&self, distance: f64) -> (f64, f64) {
        if distance <= 0.0 {
            return (0.0, 0.0);
        }
        let (v, a) = (self.max_speed, self.max_accel);
        if distance >= v * v / a {
            (distance / v + v / a, v)
        } else {
            let peak = (distance * a).sqrt();
            (2.0 * peak / a, peak)
        }
    }

    /// Moves along a straight segment; returns (duration, peak speed).
    fn travel(&mut self, to: [f64; 3]) -> (f64, f64) {
        let from = self.state.pose;
        let delta = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
        let dist = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        let (t, peak) = self.profile(dist);
        if dist > 0.0 {
            self.state.velocity = delta.map(|d| d / dist * peak);
        }
        self.state.pose = to;
        (t, peak)
    }

    fn execute(&mut self, cmd: &Command) -> Result<(f64, f64), DispatchError> {
        let ws = self.workspace;
        Ok(match cmd {
            Command::MoveTo { x, y, z } => {
                let target = [*x, *y, *z];
                if !ws.contains(target) {
                    return Err(DispatchError::WorkspaceViolation { target });
                }
                self.travel(target)
            }
            Command::PushObject { color } => {
                let obj = *self
                    .objects
                    .get(color)
                    .ok_or(DispatchError::UnknownObject { color: *color })?;
                if !ws.contains(obj) {
                    return Err(DispatchError::WorkspaceViolation { target: obj });
                }
                let (t1, p1) = self.travel(obj);
                let end = ws.clamp([obj[0], obj[1] + PUSH_STROKE, obj[2]]);
                let (t2, p2) = self.travel(end);
                (t1 + t2, p1.max(p2))
            }
            Command::DrawFigure { shape: Shape::Circle } => {
                let half = [0, 1].map(|i| (ws.max[i] - ws.min[i]) / 2.0);
                let r = CIRCLE_RADIUS.min(half[0]).min(half[1]);
                let p = self.state.pose;
                let center = [
                    p[0].clamp(ws.min[0] + r, ws.max[0] - r),
                    p[1].clamp(ws.min[1] + r, ws.max[1] - r),
                    p[2],
                ];
                let start = [center[0] + r, center[1], center[2]];
                let (t1, p1) = self.travel(start);
                let (t2, p2) = self.profile(2.0 * PI * r);
                (t1 + t2, p1.max(p2))
            }
            Command::DrawFigure { shape: Shape::Line } => {
                let p = self.state.pose;
                let forward = [p[0] + LINE_LENGTH, p[1], p[2]];
                let end = if ws.contains(forward) {
                    forward
                } else {
                    ws.clamp([p[0] - LINE_LENGTH, p[1], p[2]])
                };
                self.travel(end)
            }
            Command::ActivateProgram { id } => {
                self.state.active_program = Some(id.clone());
                (0.0, 0.0)
            }
            Command::Stop => {
                self.state.velocity = [0.0; 3];
                self.state.active_program = None;
                (0.0, 0.0)
            }
        })
    }
}

impl RobotAdapter for MockRobot {
    fn dispatch(&mut self, cmd: &Command) -> Result<Ack, DispatchError> {
        if !self.available {
            return Err(DispatchError::AdapterUnavailable);
        }
        let before = self.state.clone();
        match self.execute(cmd) {
            Ok((duration_s, peak_speed)) => Ok(Ack {
                command: cmd.clone(),
                state: self.state.clone(),
                duration_s,
                peak_speed,
            }),
            Err(e) => {
                self.state = before;
                Err(e)
            }
        }
    }

    fn state(&self) -> RobotState {
        self.state.clone()
    }
}
