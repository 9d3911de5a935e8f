//! Twin Delayed DDPG: twin critics with clipped double-Q targets,
//! target-policy smoothing, delayed actor updates and Polyak targets.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::nn::{
    mlp_backward, mlp_forward, mlp_input_grad, mlp_predict, AdamConfig, AdamState, Gradients,
    Matrix, MlpParams, OutputActivation, Rng,
};
use crate::replay::Batch;

/// Which critic's error feeds replay priorities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrioritySource {
    #[default]
    Critic1,
    /// `min(C₁, C₂)` against the shared target.
    Min,
}

impl FromStr for PrioritySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "critic1" => Ok(PrioritySource::Critic1),
            "min" => Ok(PrioritySource::Min),
            other => Err(Error::Config(format!(
                "unknown priority source `{other}` (expected critic1 or min)"
            ))),
        }
    }
}

impl fmt::Display for PrioritySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrioritySource::Critic1 => "critic1",
            PrioritySource::Min => "min",
        })
    }
}

/// Agent hyperparameters. Noise scales are fractions of the action bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub sigma_smooth: f64,
    pub smooth_clip: f64,
    pub sigma_explore: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub priority_source: PrioritySource,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            sigma_smooth: 0.2,
            smooth_clip: 0.5,
            sigma_explore: 0.1,
            batch_size: 256,
            hidden: 256,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            priority_source: PrioritySource::Critic1,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("sigma-explore", self.sigma_explore),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma-smooth", self.sigma_smooth),
            ("smooth-clip", self.smooth_clip),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.gamma > 1.0 || self.tau > 1.0 {
            return Err(Error::Config("gamma and tau must lie in (0, 1]".into()));
        }
        if self.policy_delay == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "policy delay, batch size and hidden width must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: MlpParams,
    pub critic1: MlpParams,
    pub critic2: MlpParams,
    pub actor_target: MlpParams,
    pub critic1_target: MlpParams,
    pub critic2_target: MlpParams,
    pub actor_opt: AdamState,
    /// Shared by both critics so their step counts stay aligned.
    pub critic_opt: AdamState,
    pub action_bound: f64,
    pub critic_updates: usize,
    pub actor_updates: usize,
}

impl AgentNets {
    /// Fresh networks; targets start as bit-copies of the online nets.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_bound: f64,
        config: &Td3Config,
        rng: &mut Rng,
    ) -> Self {
        let h = config.hidden;
        let actor = MlpParams::new_random(
            state_dim,
            h,
            action_dim,
            OutputActivation::Tanh {
                bound: action_bound,
            },
            rng,
        );
        let critic1 = MlpParams::new_random(
            state_dim + action_dim,
            h,
            1,
            OutputActivation::Identity,
            rng,
        );
        let critic2 = MlpParams::new_random(
            state_dim + action_dim,
            h,
            1,
            OutputActivation::Identity,
            rng,
        );
        Self::from_networks(actor, critic1, critic2, action_bound, config)
    }

    pub fn from_networks(
        actor: MlpParams,
        critic1: MlpParams,
        critic2: MlpParams,
        action_bound: f64,
        config: &Td3Config,
    ) -> Self {
        let actor_opt = AdamState::new(&[&actor], config.actor_adam);
        let critic_opt = AdamState::new(&[&critic1, &critic2], config.critic_adam);
        Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic_opt,
            action_bound,
            critic_updates: 0,
            actor_updates: 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }
}

/// `clip(actor(s) + N(0, explore_std²·I), ±bound)`.
pub fn act(nets: &AgentNets, state: &[f64], explore_std: f64, rng: &mut Rng) -> Vec<f64> {
    let bound = nets.action_bound;
    let mut a = nets.actor.forward_one(state);
    if explore_std > 0.0 {
        for v in &mut a {
            *v = (*v + rng.normal(0.0, explore_std)).clamp(-bound, bound);
        }
    }
    a
}

/// Bootstrapped critic targets and the intermediate quantities behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Smoothed target-policy actions at `s′`.
    pub next_actions: Matrix,
    pub q1_next: Vec<f64>,
    pub q2_next: Vec<f64>,
    pub y: Vec<f64>,
}

/// `y = r + γ·(1 − terminal)·min(C′₁, C′₂)(s′, ã)` where
/// `ã = clip(A′(s′) + clip(ε, ±clip), ±bound)` and `ε ~ N(0, smooth_std²)`.
pub fn compute_targets(
    nets: &AgentNets,
    batch: &Batch,
    gamma: f64,
    smooth_std: f64,
    smooth_clip: f64,
    rng: &mut Rng,
) -> Result<Targets> {
    let bound = nets.action_bound;
    let mut next_actions = mlp_predict(&nets.actor_target, &batch.next_states)?;
    if smooth_std > 0.0 {
        for v in next_actions.as_mut_slice() {
            let noise = rng.normal(0.0, smooth_std).clamp(-smooth_clip, smooth_clip);
            *v = (*v + noise).clamp(-bound, bound);
        }
    }
    let input = batch.next_states.hcat(&next_actions)?;
    let q1_next = mlp_predict(&nets.critic1_target, &input)?.into_vec();
    let q2_next = mlp_predict(&nets.critic2_target, &input)?.into_vec();
    let y = bootstrap(batch, gamma, &q1_next, &q2_next);
    Ok(Targets {
        next_actions,
        q1_next,
        q2_next,
        y,
    })
}

fn bootstrap(batch: &Batch, gamma: f64, q1: &[f64], q2: &[f64]) -> Vec<f64> {
    batch
        .rewards
        .iter()
        .zip(&batch.terminals)
        .zip(q1.iter().zip(q2))
        .map(
            |((&r, &terminal), (&a, &b))| {
                if terminal {
                    r
                } else {
                    r + gamma * a.min(b)
                }
            },
        )
        .collect()
}

/// `|y − C(s, a)|` under the current networks without smoothing noise, used
/// as the initial priority of freshly collected transitions.
pub fn td_errors(
    nets: &AgentNets,
    batch: &Batch,
    gamma: f64,
    source: PrioritySource,
) -> Result<Vec<f64>> {
    let next_actions = mlp_predict(&nets.actor_target, &batch.next_states)?;
    let next_input = batch.next_states.hcat(&next_actions)?;
    let q1_next = mlp_predict(&nets.critic1_target, &next_input)?.into_vec();
    let q2_next = mlp_predict(&nets.critic2_target, &next_input)?.into_vec();
    let y = bootstrap(batch, gamma, &q1_next, &q2_next);
    let input = batch.states.hcat(&batch.actions)?;
    let q1 = mlp_predict(&nets.critic1, &input)?;
    let current: Vec<f64> = match source {
        PrioritySource::Critic1 => q1.into_vec(),
        PrioritySource::Min => {
            let q2 = mlp_predict(&nets.critic2, &input)?;
            q1.as_slice()
                .iter()
                .zip(q2.as_slice())
                .map(|(a, b)| a.min(*b))
                .collect()
        }
    };
    Ok(y.iter().zip(&current).map(|(y, q)| (y - q).abs()).collect())
}

/// Mean squared error of `critic` against `y` and its parameter gradient.
/// Also returns the predictions the loss was computed from.
pub fn critic_loss_gradient(
    critic: &MlpParams,
    input: &Matrix,
    y: &[f64],
) -> Result<(f64, Gradients, Vec<f64>)> {
    if y.len() != input.rows() {
        return Err(Error::Shape {
            op: "critic_loss_gradient",
            expected: format!("{} targets", input.rows()),
            got: format!("{}", y.len()),
        });
    }
    let (q, cache) = mlp_forward(critic, input)?;
    let b = y.len() as f64;
    let residual: Vec<f64> = q.as_slice().iter().zip(y).map(|(q, y)| q - y).collect();
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / b;
    let grad_out = Matrix::from_vec(
        residual.len(),
        1,
        residual.iter().map(|r| 2.0 * r / b).collect(),
    )?;
    let (grads, _) = mlp_backward(critic, &cache, &grad_out)?;
    Ok((loss, grads, q.into_vec()))
}

/// `−mean_s C(s, A(s))` and its gradient with respect to the actor.
pub fn actor_loss_gradient(
    actor: &MlpParams,
    critic: &MlpParams,
    states: &Matrix,
) -> Result<(f64, Gradients)> {
    let n = states.cols();
    let (actions, actor_cache) = mlp_forward(actor, states)?;
    let input = states.hcat(&actions)?;
    let (q, critic_cache) = mlp_forward(critic, &input)?;
    let b = states.rows() as f64;
    let loss = -q.as_slice().iter().sum::<f64>() / b;
    let dq = Matrix::filled(states.rows(), 1, -1.0 / b);
    let d_input = mlp_input_grad(critic, &critic_cache, &dq)?;
    let d_actions = d_input.columns(n, d_input.cols());
    let (grads, _) = mlp_backward(actor, &actor_cache, &d_actions)?;
    Ok((loss, grads))
}

/// Outcome of one critic step.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticReport {
    pub loss1: f64,
    pub loss2: f64,
    /// Per-transition |δ| for priority write-back.
    pub abs_td: Vec<f64>,
}

/// One joint Adam step of both critics toward the shared targets `y`.
pub fn critic_update(
    nets: &mut AgentNets,
    batch: &Batch,
    y: &[f64],
    source: PrioritySource,
) -> Result<CriticReport> {
    let input = batch.states.hcat(&batch.actions)?;
    let (loss1, g1, q1) = critic_loss_gradient(&nets.critic1, &input, y)?;
    let (loss2, g2, q2) = critic_loss_gradient(&nets.critic2, &input, y)?;
    if !loss1.is_finite() || !loss2.is_finite() {
        return Err(Error::Divergence {
            step: nets.critic_updates,
            what: format!("critic losses {loss1} / {loss2}"),
        });
    }
    let abs_td = match source {
        PrioritySource::Critic1 => q1.iter().zip(y).map(|(q, y)| (y - q).abs()).collect(),
        PrioritySource::Min => q1
            .iter()
            .zip(&q2)
            .zip(y)
            .map(|((a, b), y)| (y - a.min(*b)).abs())
            .collect(),
    };
    nets.critic_opt
        .step(&mut [&mut nets.critic1, &mut nets.critic2], &[&g1, &g2])?;
    nets.critic_updates += 1;
    Ok(CriticReport {
        loss1,
        loss2,
        abs_td,
    })
}

/// One Adam step of the actor ascending `mean C₁(s, A(s))`. Returns the
/// actor loss `−mean Q`.
pub fn actor_update(nets: &mut AgentNets, batch: &Batch) -> Result<f64> {
    let (loss, grads) = actor_loss_gradient(&nets.actor, &nets.critic1, &batch.states)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: nets.critic_updates,
            what: format!("actor loss {loss}"),
        });
    }
    nets.actor_opt.step(&mut [&mut nets.actor], &[&grads])?;
    nets.actor_updates += 1;
    Ok(loss)
}

/// Polyak averaging of all three target networks.
pub fn soft_update(nets: &mut AgentNets, tau: f64) {
    nets.actor_target.blend_from(&nets.actor, tau);
    nets.critic1_target.blend_from(&nets.critic1, tau);
    nets.critic2_target.blend_from(&nets.critic2, tau);
}
