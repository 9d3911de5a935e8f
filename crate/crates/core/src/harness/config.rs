use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dper::{KlMode, DEFAULT_JITTER};
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::td3::{PrioritySource, Td3Config};

/// Replay strategy: how critic and actor batches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Uniform batches for both networks.
    #[serde(rename = "er")]
    Er,
    /// Prioritized batches for both networks.
    #[serde(rename = "per")]
    Per,
    /// Prioritized critic batches, argmin-KL actor batches.
    #[serde(rename = "dper")]
    Dper,
    /// Uniform critic batches, argmin-KL actor batches.
    #[serde(rename = "dper-uniform")]
    DperUniform,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Er,
        Strategy::Per,
        Strategy::Dper,
        Strategy::DperUniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Er => "er",
            Strategy::Per => "per",
            Strategy::Dper => "dper",
            Strategy::DperUniform => "dper-uniform",
        }
    }

    pub fn critic_prioritized(self) -> bool {
        matches!(self, Strategy::Per | Strategy::Dper)
    }

    pub fn selects_actor_batch(self) -> bool {
        matches!(self, Strategy::Dper | Strategy::DperUniform)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy `{s}` (expected er, per, dper or dper-uniform)"
                ))
            })
    }
}

/// Parses `"0,1,2"` as an explicit list and `"10"` as seeds `0..10`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let parse = |p: &str| {
        p.trim()
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("bad seed `{p}`")))
    };
    if s.contains(',') {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(parse)
            .collect()
    } else {
        Ok((0..parse(s)?).collect())
    }
}

/// Parses a comma-separated list of candidate counts.
pub fn parse_k_values(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad K value `{p}`")))
        })
        .collect()
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub strategy: Strategy,
    /// Candidate count; only meaningful for DPER strategies.
    pub k: Option<usize>,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    pub warmup: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub capacity: usize,
    pub td3: Td3Config,
    pub alpha: f64,
    pub priority_eps: f64,
    pub kl_mode: KlMode,
    pub jitter: f64,
    pub window: usize,
    pub workers: usize,
    pub timing_exclusive: bool,
    pub out_dir: PathBuf,
}

pub const DEFAULT_K: usize = 2;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvName::Pendulum,
            strategy: Strategy::Dper,
            k: None,
            seeds: (0..10).collect(),
            total_steps: 50_000,
            warmup: 1_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            capacity: 100_000,
            td3: Td3Config::default(),
            alpha: 0.6,
            priority_eps: 1e-3,
            kl_mode: KlMode::Full,
            jitter: DEFAULT_JITTER,
            window: 5,
            workers: 1,
            timing_exclusive: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Candidate count used by the run (1 for strategies without selection).
    pub fn candidates(&self) -> usize {
        if self.strategy.selects_actor_batch() {
            self.k.unwrap_or(DEFAULT_K)
        } else {
            1
        }
    }

    /// K as reported in outputs; 0 for strategies without selection.
    pub fn k_label(&self) -> usize {
        if self.strategy.selects_actor_batch() {
            self.candidates()
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.td3.validate()?;
        if !self.strategy.selects_actor_batch() && self.k.is_some() {
            return Err(Error::Config(format!(
                "--k only applies to dper and dper-uniform, not {}",
                self.strategy
            )));
        }
        if self.strategy.selects_actor_batch() && self.candidates() == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.total_steps == 0 || self.warmup > self.total_steps {
            return Err(Error::Config(format!(
                "need 0 < warmup ({}) <= steps ({})",
                self.warmup, self.total_steps
            )));
        }
        if self.eval_interval == 0 || self.eval_interval > self.total_steps {
            return Err(Error::Config(format!(
                "eval interval {} must lie in 1..=steps",
                self.eval_interval
            )));
        }
        if self.eval_episodes == 0 || self.window == 0 || self.workers == 0 {
            return Err(Error::Config(
                "eval episodes, window and workers must be at least 1".into(),
            ));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !(self.priority_eps >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::Config(
                "alpha, priority floor and jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&mut self, overrides: &ConfigOverrides) -> Result<()> {
        let o = overrides;
        if let Some(v) = o.env {
            self.env = v;
        }
        if let Some(v) = o.strategy {
            self.strategy = v;
        }
        if let Some(v) = o.k {
            self.k = Some(v);
        }
        if let Some(v) = &o.seeds {
            self.seeds = v.to_list();
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = o.$field.clone() { $target = v; })*
            };
        }
        set! {
            steps => self.total_steps,
            warmup => self.warmup,
            eval_interval => self.eval_interval,
            eval_episodes => self.eval_episodes,
            capacity => self.capacity,
            alpha => self.alpha,
            priority_eps => self.priority_eps,
            kl_mode => self.kl_mode,
            jitter => self.jitter,
            window => self.window,
            workers => self.workers,
            timing_exclusive => self.timing_exclusive,
            out => self.out_dir,
            batch => self.td3.batch_size,
            hidden => self.td3.hidden,
            policy_delay => self.td3.policy_delay,
            tau => self.td3.tau,
            gamma => self.td3.gamma,
            sigma_smooth => self.td3.sigma_smooth,
            smooth_clip => self.td3.smooth_clip,
            sigma_explore => self.td3.sigma_explore,
            priority_source => self.td3.priority_source,
        }
        if let Some(lr) = o.lr {
            self.td3.actor_adam.lr = lr;
            self.td3.critic_adam.lr = lr;
        }
        Ok(())
    }
}

/// Seeds given either as a count or an explicit list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn to_list(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

/// Partial configuration from a TOML file or command-line flags. Keys use
/// the flag spellings (`eval-interval`, `sigma-smooth`, ...).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigOverrides {
    pub env: Option<EnvName>,
    pub strategy: Option<Strategy>,
    pub k: Option<usize>,
    pub seeds: Option<SeedSpec>,
    pub steps: Option<usize>,
    pub warmup: Option<usize>,
    pub eval_interval: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub capacity: Option<usize>,
    pub alpha: Option<f64>,
    pub priority_eps: Option<f64>,
    pub kl_mode: Option<KlMode>,
    pub jitter: Option<f64>,
    pub window: Option<usize>,
    pub workers: Option<usize>,
    pub timing_exclusive: Option<bool>,
    pub out: Option<PathBuf>,
    pub batch: Option<usize>,
    pub hidden: Option<usize>,
    pub policy_delay: Option<usize>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma_smooth: Option<f64>,
    pub smooth_clip: Option<f64>,
    pub sigma_explore: Option<f64>,
    pub priority_source: Option<PrioritySource>,
    pub lr: Option<f64>,
    #[serde(rename = "k-values")]
    pub k_values: Option<Vec<usize>>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
