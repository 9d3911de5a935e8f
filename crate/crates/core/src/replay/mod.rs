//! Transition storage with uniform and proportional prioritized sampling.

mod buffer;
mod snapshot;
mod sum_tree;

pub use buffer::{Batch, RingBuffer, Transition};
pub use snapshot::{load_snapshot, save_snapshot};
pub use sum_tree::SumTree;

use crate::error::{Error, Result};
use crate::nn::Rng;

/// Priority shaping: leaf mass is `(|δ| + eps)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityConfig {
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            eps: 1e-3,
        }
    }
}

impl PriorityConfig {
    pub fn mass(&self, priority: f64) -> f64 {
        (priority.abs() + self.eps).powf(self.alpha)
    }
}

/// Buffer positions of a sampled batch and their leaf masses at draw time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleMeta {
    pub indices: Vec<usize>,
    pub masses: Vec<f64>,
}

/// Ring buffer plus the sum tree over its slots.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: RingBuffer,
    tree: SumTree,
    priority: PriorityConfig,
}

impl ReplayMemory {
    pub fn new(
        capacity: usize,
        state_dim: usize,
        action_dim: usize,
        priority: PriorityConfig,
    ) -> Result<Self> {
        if !(priority.alpha >= 0.0) || !(priority.eps >= 0.0) {
            return Err(Error::Config(format!(
                "priority exponent and floor must be non-negative, got {priority:?}"
            )));
        }
        Ok(Self {
            buffer: RingBuffer::new(capacity, state_dim, action_dim)?,
            tree: SumTree::new(capacity),
            priority,
        })
    }

    pub fn buffer(&self) -> &RingBuffer {
        &self.buffer
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn priority_config(&self) -> PriorityConfig {
        self.priority
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Stores `t` with initial priority `priority` (a non-negative |δ|).
    pub fn push(&mut self, t: &Transition, priority: f64) -> Result<usize> {
        check_priority(priority)?;
        let slot = self.buffer.push(t)?;
        self.tree.set(slot, self.priority.mass(priority));
        Ok(slot)
    }

    /// `b` independent uniform draws over occupied slots, with replacement.
    pub fn sample_uniform(&self, b: usize, rng: &mut Rng) -> Result<(Batch, SampleMeta)> {
        self.check_size(b)?;
        let indices: Vec<usize> = (0..b).map(|_| rng.below(self.buffer.len())).collect();
        Ok(self.batch_for(indices))
    }

    /// Stratified proportional sampling: the total mass is cut into `b`
    /// equal segments and one point is drawn uniformly inside each.
    pub fn sample_prioritized(&self, b: usize, rng: &mut Rng) -> Result<(Batch, SampleMeta)> {
        self.check_size(b)?;
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::DegeneratePriorities);
        }
        let segment = total / b as f64;
        let indices = (0..b)
            .map(|j| {
                let leaf = self.tree.find((j as f64 + rng.uniform()) * segment);
                debug_assert!(leaf < self.buffer.len());
                leaf
            })
            .collect();
        Ok(self.batch_for(indices))
    }

    /// Rewrites the leaves of a sampled batch with fresh |δ| values.
    pub fn update_priorities(&mut self, meta: &SampleMeta, deltas: &[f64]) -> Result<()> {
        if deltas.len() != meta.indices.len() {
            return Err(Error::Contract(format!(
                "{} priorities for {} sampled indices",
                deltas.len(),
                meta.indices.len()
            )));
        }
        for &d in deltas {
            check_priority(d)?;
        }
        for (&i, &d) in meta.indices.iter().zip(deltas) {
            if i >= self.buffer.len() {
                return Err(Error::Contract(format!(
                    "index {i} is not an occupied slot"
                )));
            }
            self.tree.set(i, self.priority.mass(d));
        }
        Ok(())
    }

    /// Sampling probability of each occupied slot.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.tree.total();
        (0..self.buffer.len())
            .map(|i| self.tree.leaf(i) / total)
            .collect()
    }

    /// Batches are drawn with replacement, so any non-empty buffer can
    /// serve a batch of any positive size.
    fn check_size(&self, b: usize) -> Result<()> {
        if b == 0 || self.buffer.is_empty() {
            return Err(Error::InsufficientData {
                need: b.max(1),
                have: self.buffer.len(),
            });
        }
        Ok(())
    }

    fn batch_for(&self, indices: Vec<usize>) -> (Batch, SampleMeta) {
        let batch = self.buffer.gather(&indices);
        let masses = indices.iter().map(|&i| self.tree.leaf(i)).collect();
        (batch, SampleMeta { indices, masses })
    }
}

fn check_priority(p: f64) -> Result<()> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::Contract(format!(
            "priority must be finite and non-negative, got {p}"
        )));
    }
    Ok(())
}
