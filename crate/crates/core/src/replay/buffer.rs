use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One `(s, a, r, s′)` experience with episode-end flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

/// Fixed-capacity cyclic store laid out column-wise per field.
#[derive(Debug, Clone, PartialEq)]
pub struct RingBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    truncateds: Vec<bool>,
    write_index: usize,
    size: usize,
}

impl RingBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || action_dim == 0 {
            return Err(Error::Config(
                "replay capacity and dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states: vec![0.0; capacity * state_dim],
            actions: vec![0.0; capacity * action_dim],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * state_dim],
            terminals: vec![false; capacity],
            truncateds: vec![false; capacity],
            write_index: 0,
            size: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Slot the next push will write.
    pub fn write_index(&self) -> usize {
        self.write_index
    }

    fn validate(&self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::Shape {
                op: "RingBuffer::push",
                expected: format!("state {} / action {}", self.state_dim, self.action_dim),
                got: format!(
                    "state {} / next {} / action {}",
                    t.state.len(),
                    t.next_state.len(),
                    t.action.len()
                ),
            });
        }
        let finite = t
            .state
            .iter()
            .chain(&t.action)
            .chain(&t.next_state)
            .all(|v| v.is_finite())
            && t.reward.is_finite();
        if !finite {
            return Err(Error::Contract(
                "transition contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Stores `t`, overwriting the oldest slot once full. Returns the slot.
    pub fn push(&mut self, t: &Transition) -> Result<usize> {
        self.validate(t)?;
        let slot = self.write_index;
        let (n, m) = (self.state_dim, self.action_dim);
        self.states[slot * n..(slot + 1) * n].copy_from_slice(&t.state);
        self.actions[slot * m..(slot + 1) * m].copy_from_slice(&t.action);
        self.next_states[slot * n..(slot + 1) * n].copy_from_slice(&t.next_state);
        self.rewards[slot] = t.reward;
        self.terminals[slot] = t.terminal;
        self.truncateds[slot] = t.truncated;
        self.write_index = (slot + 1) % self.capacity;
        self.size = (self.size + 1).min(self.capacity);
        Ok(slot)
    }

    pub fn get(&self, slot: usize) -> Option<Transition> {
        if slot >= self.size {
            return None;
        }
        let (n, m) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[slot * n..(slot + 1) * n].to_vec(),
            action: self.actions[slot * m..(slot + 1) * m].to_vec(),
            reward: self.rewards[slot],
            next_state: self.next_states[slot * n..(slot + 1) * n].to_vec(),
            terminal: self.terminals[slot],
            truncated: self.truncateds[slot],
        })
    }

    /// Occupied slots from oldest to newest.
    pub fn slots_by_age(&self) -> impl Iterator<Item = usize> + '_ {
        let start = if self.size < self.capacity {
            0
        } else {
            self.write_index
        };
        (0..self.size).map(move |k| (start + k) % self.capacity)
    }

    /// Gathers the given slots into a batch.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (n, m) = (self.state_dim, self.action_dim);
        let b = indices.len();
        let mut states = Vec::with_capacity(b * n);
        let mut actions = Vec::with_capacity(b * m);
        let mut next_states = Vec::with_capacity(b * n);
        let mut rewards = Vec::with_capacity(b);
        let mut terminals = Vec::with_capacity(b);
        for &i in indices {
            debug_assert!(i < self.size);
            states.extend_from_slice(&self.states[i * n..(i + 1) * n]);
            actions.extend_from_slice(&self.actions[i * m..(i + 1) * m]);
            next_states.extend_from_slice(&self.next_states[i * n..(i + 1) * n]);
            rewards.push(self.rewards[i]);
            terminals.push(self.terminals[i]);
        }
        Batch {
            states: Matrix::from_vec(b, n, states).expect("gathered state rows"),
            actions: Matrix::from_vec(b, m, actions).expect("gathered action rows"),
            rewards,
            next_states: Matrix::from_vec(b, n, next_states).expect("gathered next-state rows"),
            terminals,
        }
    }
}

/// Row-stacked transitions. Truncation is not carried: a truncated
/// transition bootstraps like any non-terminal one.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts
            .first()
            .ok_or_else(|| Error::Contract("empty transition list".into()))?;
        let mut buf = RingBuffer::new(ts.len(), first.state.len(), first.action.len())?;
        for t in ts {
            buf.push(t)?;
        }
        let idx: Vec<usize> = (0..ts.len()).collect();
        Ok(buf.gather(&idx))
    }
}
