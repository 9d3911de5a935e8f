use std::time::{Duration, Instant};

use crate::dper::{score_candidates, KlReference};
use crate::envs::{Env, EnvName, Environment};
use crate::error::{Error, Result};
use crate::nn::{Rng, Stream};
use crate::replay::{Batch, PriorityConfig, ReplayMemory, SampleMeta, Transition};
use crate::td3::{
    act, actor_update, compute_targets, critic_update, soft_update, td_errors, AgentNets,
};

use super::config::{ExperimentConfig, Strategy};
use super::eval::evaluate;

/// One evaluation of the greedy policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub seed: u64,
}

/// Accumulated time per phase of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    /// Action selection and environment stepping.
    pub env: Duration,
    /// Drawing batches, pushing transitions and writing priorities.
    pub sampling: Duration,
    /// Network forwards and backwards, optimizer and target updates.
    pub forward_backward: Duration,
    /// KL scoring of actor-batch candidates.
    pub eta_scoring: Duration,
    pub eval: Duration,
    /// Total elapsed time of the run.
    pub wall: Duration,
}

impl PhaseTimes {
    pub fn phases_total(&self) -> Duration {
        self.env + self.sampling + self.forward_backward + self.eta_scoring + self.eval
    }

    /// Fraction of wall time attributed to a named phase.
    pub fn coverage(&self) -> f64 {
        if self.wall.is_zero() {
            return 1.0;
        }
        self.phases_total().as_secs_f64() / self.wall.as_secs_f64()
    }
}

/// Diagnostics of the actor half of an update.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorDiag {
    pub loss: f64,
    /// η of the chosen candidate; `None` for strategies without selection.
    pub chosen_eta: Option<f64>,
    pub candidate_etas: Vec<f64>,
    pub chosen_mean_sq_deviation: Option<f64>,
}

/// Diagnostics of one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiag {
    pub step: usize,
    pub critic_loss1: f64,
    pub critic_loss2: f64,
    pub mean_abs_td: f64,
    pub actor: Option<ActorDiag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub step: usize,
    pub kind: &'static str,
    pub message: String,
}

/// Everything recorded by a single-seed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub strategy: Strategy,
    pub env: EnvName,
    pub seed: u64,
    /// Candidate count, 0 when the strategy does not select actor batches.
    pub k: usize,
    pub evals: Vec<EvalRecord>,
    pub updates: Vec<UpdateDiag>,
    pub timing: PhaseTimes,
    pub failure: Option<RunFailure>,
    pub steps_done: usize,
    pub buffer_len: usize,
    pub critic_updates: usize,
    pub actor_updates: usize,
}

impl RunLog {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

struct Streams {
    env: Rng,
    explore: Rng,
    critic: Rng,
    actor: Rng,
    target: Rng,
}

/// Step-wise driver for one seed of an experiment.
///
/// [`run_training`] is the usual entry point; the step API is exposed so
/// traces can be inspected between steps.
pub struct Trainer {
    config: ExperimentConfig,
    seed: u64,
    env: Env,
    nets: AgentNets,
    memory: ReplayMemory,
    rng: Streams,
    eval_seed: u64,
    reference: KlReference,
    observation: Vec<f64>,
    t: usize,
    log: RunLog,
    last_critic: Option<SampleMeta>,
    last_actor: Option<SampleMeta>,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = config.env.make();
        let spec = env.spec();
        let mut init = Rng::stream(seed, Stream::Init);
        let nets = AgentNets::new(
            spec.state_dim,
            spec.action_dim,
            spec.action_bound,
            &config.td3,
            &mut init,
        );
        let memory = ReplayMemory::new(
            config.capacity,
            spec.state_dim,
            spec.action_dim,
            PriorityConfig {
                alpha: config.alpha,
                eps: config.priority_eps,
            },
        )?;
        let reference = KlReference::from_exploration_std(
            config.td3.sigma_explore * spec.action_bound,
            spec.action_dim,
        )?;
        let mut rng = Streams {
            env: Rng::stream(seed, Stream::Env),
            explore: Rng::stream(seed, Stream::Explore),
            critic: Rng::stream(seed, Stream::CriticSampling),
            actor: Rng::stream(seed, Stream::ActorSampling),
            target: Rng::stream(seed, Stream::TargetNoise),
        };
        let eval_seed = Rng::stream(seed, Stream::Eval).next_u64();
        let observation = env.reset(rng.env.next_u64());
        let log = RunLog {
            strategy: config.strategy,
            env: config.env,
            seed,
            k: config.k_label(),
            evals: Vec::with_capacity(config.total_steps / config.eval_interval),
            updates: Vec::with_capacity(config.total_steps - config.warmup),
            timing: PhaseTimes::default(),
            failure: None,
            steps_done: 0,
            buffer_len: 0,
            critic_updates: 0,
            actor_updates: 0,
        };
        Ok(Self {
            config: config.clone(),
            seed,
            env,
            nets,
            memory,
            rng,
            eval_seed,
            reference,
            observation,
            t: 0,
            log,
            last_critic: None,
            last_actor: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps_done(&self) -> usize {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.total_steps || self.log.failed()
    }

    pub fn nets(&self) -> &AgentNets {
        &self.nets
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    /// Indices of the most recent critic batch.
    pub fn last_critic_meta(&self) -> Option<&SampleMeta> {
        self.last_critic.as_ref()
    }

    /// Indices of the most recent actor batch.
    pub fn last_actor_meta(&self) -> Option<&SampleMeta> {
        self.last_actor.as_ref()
    }

    /// Seed used for every evaluation of this run.
    pub fn eval_seed(&self) -> u64 {
        self.eval_seed
    }

    /// Advances one environment step, including any updates and evaluation
    /// scheduled for it.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::Contract(format!(
                "run already finished after {} steps",
                self.t
            )));
        }
        self.t += 1;
        let t = self.t;
        let bound = self.nets.action_bound;

        let clock = Instant::now();
        let action: Vec<f64> = if t <= self.config.warmup {
            (0..self.nets.action_dim())
                .map(|_| self.rng.explore.uniform_range(-bound, bound))
                .collect()
        } else {
            act(
                &self.nets,
                &self.observation,
                self.config.td3.sigma_explore * bound,
                &mut self.rng.explore,
            )
        };
        let result = self.env.step(&action)?;
        let transition = Transition {
            state: std::mem::take(&mut self.observation),
            action,
            reward: result.reward,
            next_state: result.next_observation.clone(),
            terminal: result.terminal,
            truncated: result.truncated,
        };
        self.observation = if result.done() {
            self.env.reset(self.rng.env.next_u64())
        } else {
            result.next_observation
        };
        self.log.timing.env += clock.elapsed();

        let priority = if self.config.strategy.critic_prioritized() {
            let clock = Instant::now();
            let single = Batch::from_transitions(std::slice::from_ref(&transition))?;
            let delta = td_errors(
                &self.nets,
                &single,
                self.config.td3.gamma,
                self.config.td3.priority_source,
            )?[0];
            self.log.timing.forward_backward += clock.elapsed();
            delta
        } else {
            0.0
        };
        let clock = Instant::now();
        self.memory.push(&transition, priority)?;
        self.log.timing.sampling += clock.elapsed();

        if t > self.config.warmup {
            self.update(t)?;
        }
        if t.is_multiple_of(self.config.eval_interval) {
            let clock = Instant::now();
            let mut eval_env = self.config.env.make();
            let (mean_return, std_return) = evaluate(
                &self.nets.actor,
                &mut eval_env,
                self.config.eval_episodes,
                self.eval_seed,
            )?;
            self.log.evals.push(EvalRecord {
                step: t,
                mean_return,
                std_return,
                seed: self.seed,
            });
            self.log.timing.eval += clock.elapsed();
        }
        self.sync_counters();
        Ok(())
    }

    fn update(&mut self, t: usize) -> Result<()> {
        let cfg = self.config.td3;
        let strategy = self.config.strategy;
        let bound = self.nets.action_bound;
        let b = cfg.batch_size;

        let clock = Instant::now();
        let (batch, meta) = if strategy.critic_prioritized() {
            self.memory.sample_prioritized(b, &mut self.rng.critic)?
        } else {
            self.memory.sample_uniform(b, &mut self.rng.critic)?
        };
        self.log.timing.sampling += clock.elapsed();

        let clock = Instant::now();
        let targets = compute_targets(
            &self.nets,
            &batch,
            cfg.gamma,
            cfg.sigma_smooth * bound,
            cfg.smooth_clip * bound,
            &mut self.rng.target,
        )?;
        let report = critic_update(&mut self.nets, &batch, &targets.y, cfg.priority_source)?;
        self.log.timing.forward_backward += clock.elapsed();

        let mean_abs_td = report.abs_td.iter().sum::<f64>() / report.abs_td.len() as f64;
        if strategy.critic_prioritized() {
            let clock = Instant::now();
            self.memory.update_priorities(&meta, &report.abs_td)?;
            self.log.timing.sampling += clock.elapsed();
        }
        self.last_critic = Some(meta);

        let mut diag = UpdateDiag {
            step: t,
            critic_loss1: report.loss1,
            critic_loss2: report.loss2,
            mean_abs_td,
            actor: None,
        };

        if (t - self.config.warmup).is_multiple_of(cfg.policy_delay) {
            let (actor_batch, actor_meta, selection) = self.actor_batch()?;
            let clock = Instant::now();
            let loss = actor_update(&mut self.nets, &actor_batch)?;
            soft_update(&mut self.nets, cfg.tau);
            self.log.timing.forward_backward += clock.elapsed();
            self.last_actor = Some(actor_meta);
            diag.actor = Some(ActorDiag {
                loss,
                chosen_eta: selection.as_ref().map(|s| s.0),
                candidate_etas: selection.as_ref().map(|s| s.1.clone()).unwrap_or_default(),
                chosen_mean_sq_deviation: selection.map(|s| s.2),
            });
        }
        self.log.updates.push(diag);
        Ok(())
    }

    /// Draws the actor batch. Selection strategies also return the chosen
    /// η, every candidate η and the chosen mean squared deviation.
    #[allow(clippy::type_complexity)]
    fn actor_batch(&mut self) -> Result<(Batch, SampleMeta, Option<(f64, Vec<f64>, f64)>)> {
        let b = self.config.td3.batch_size;
        let clock = Instant::now();
        match self.config.strategy {
            Strategy::Er => {
                let (batch, meta) = self.memory.sample_uniform(b, &mut self.rng.actor)?;
                self.log.timing.sampling += clock.elapsed();
                Ok((batch, meta, None))
            }
            Strategy::Per => {
                let (batch, meta) = self.memory.sample_prioritized(b, &mut self.rng.actor)?;
                self.log.timing.sampling += clock.elapsed();
                Ok((batch, meta, None))
            }
            Strategy::Dper | Strategy::DperUniform => {
                let batches = (0..self.config.candidates())
                    .map(|_| self.memory.sample_uniform(b, &mut self.rng.actor))
                    .collect::<Result<Vec<_>>>()?;
                self.log.timing.sampling += clock.elapsed();
                let clock = Instant::now();
                let set = score_candidates(
                    &self.nets.actor,
                    batches,
                    &self.reference,
                    self.config.kl_mode,
                    self.config.jitter,
                )?;
                let etas = set.etas();
                let chosen = set.into_chosen();
                self.log.timing.eta_scoring += clock.elapsed();
                Ok((
                    chosen.batch,
                    chosen.meta,
                    Some((chosen.eta, etas, chosen.mean_sq_deviation)),
                ))
            }
        }
    }

    fn sync_counters(&mut self) {
        self.log.steps_done = self.t;
        self.log.buffer_len = self.memory.len();
        self.log.critic_updates = self.nets.critic_updates;
        self.log.actor_updates = self.nets.actor_updates;
    }

    /// Runs to completion. A failing step ends the run and is recorded in
    /// the log instead of being returned.
    pub fn run(mut self) -> RunLog {
        let start = Instant::now();
        while !self.is_finished() {
            if let Err(e) = self.step() {
                self.log.failure = Some(RunFailure {
                    step: self.t,
                    kind: e.kind(),
                    message: e.to_string(),
                });
            }
        }
        self.sync_counters();
        self.log.timing.wall += start.elapsed();
        self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }
}

/// Trains one seed of `config` start to finish.
pub fn run_training(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    Ok(Trainer::new(config, seed)?.run())
}

/// Trains every seed of `config`, running up to `config.workers` seeds at
/// once. Logs come back in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunLog>> {
    config.validate()?;
    let jobs: Vec<(ExperimentConfig, u64)> =
        config.seeds.iter().map(|&s| (config.clone(), s)).collect();
    run_jobs(&jobs, config.workers)
}

/// Runs independent `(config, seed)` jobs on at most `workers` threads.
pub fn run_jobs(jobs: &[(ExperimentConfig, u64)], workers: usize) -> Result<Vec<RunLog>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    for (cfg, _) in jobs {
        cfg.validate()?;
    }
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunLog>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((cfg, seed)) = jobs.get(i) else {
                    break;
                };
                let outcome = run_training(cfg, *seed);
                slots.lock().expect("worker panicked")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
