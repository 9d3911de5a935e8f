//! Deterministic continuous-control tasks behind one episodic interface.

mod pendulum;
mod reacher;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{Pendulum, PendulumConfig};
pub use reacher::{PointReacher, ReacherConfig};

/// Static description of a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_bound: f64,
    pub max_episode_steps: usize,
}

/// Outcome of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    /// The task reached an absorbing state.
    pub terminal: bool,
    /// The step limit ended the episode. Never set together with `terminal`.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// An episodic MDP with continuous actions.
pub trait Environment {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one tick. Actions beyond the bound are clipped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    fn observation(&self) -> Vec<f64>;

    fn elapsed_steps(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Pendulum,
    Reacher,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "pendulum",
            EnvName::Reacher => "reacher",
        }
    }

    pub fn make(self) -> Env {
        match self {
            EnvName::Pendulum => Env::Pendulum(Pendulum::default()),
            EnvName::Reacher => Env::Reacher(PointReacher::default()),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvName::Pendulum),
            "reacher" | "point-reacher" => Ok(EnvName::Reacher),
            other => Err(Error::Config(format!(
                "unknown environment `{other}` (expected pendulum or reacher)"
            ))),
        }
    }
}

/// Closed set of built-in tasks.
#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Pendulum(Pendulum),
    Reacher(PointReacher),
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        match self {
            Env::Pendulum(e) => e.spec(),
            Env::Reacher(e) => e.spec(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::Pendulum(e) => e.reset(seed),
            Env::Reacher(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        match self {
            Env::Pendulum(e) => e.step(action),
            Env::Reacher(e) => e.step(action),
        }
    }

    fn observation(&self) -> Vec<f64> {
        match self {
            Env::Pendulum(e) => e.observation(),
            Env::Reacher(e) => e.observation(),
        }
    }

    fn elapsed_steps(&self) -> usize {
        match self {
            Env::Pendulum(e) => e.elapsed_steps(),
            Env::Reacher(e) => e.elapsed_steps(),
        }
    }
}

/// Validates an action and clips it to `±bound`.
pub(crate) fn clip_action(action: &[f64], spec: &EnvSpec) -> Result<Vec<f64>> {
    if action.len() != spec.action_dim {
        return Err(Error::Shape {
            op: "Environment::step",
            expected: format!("{} action components", spec.action_dim),
            got: format!("{}", action.len()),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Contract(format!("non-finite action {action:?}")));
    }
    let b = spec.action_bound;
    Ok(action.iter().map(|a| a.clamp(-b, b)).collect())
}

pub(crate) fn check_not_finished(elapsed: usize, spec: &EnvSpec) -> Result<()> {
    if elapsed >= spec.max_episode_steps {
        return Err(Error::Contract(
            "episode already reached its step limit; call reset".into(),
        ));
    }
    Ok(())
}
