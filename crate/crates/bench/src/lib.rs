//! Fixtures shared by the benchmarks.

use dper_core::nn::{Matrix, MlpParams, OutputActivation, Rng};
use dper_core::replay::{PriorityConfig, ReplayMemory, Transition};

/// Random network with uniform initialisation.
pub fn network(input: usize, hidden: usize, output: usize, seed: u64) -> MlpParams {
    let mut rng = Rng::new(seed);
    MlpParams::new_random(input, hidden, output, OutputActivation::Identity, &mut rng)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    let data = (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

/// Full replay memory of Pendulum-shaped transitions with random priorities.
pub fn filled_memory(capacity: usize, seed: u64) -> ReplayMemory {
    let mut rng = Rng::new(seed);
    let mut memory =
        ReplayMemory::new(capacity, 3, 1, PriorityConfig::default()).expect("valid config");
    for _ in 0..capacity {
        let mut vec = |n: usize| (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let t = Transition {
            state: vec(3),
            action: vec(1),
            reward: -1.0,
            next_state: vec(3),
            terminal: false,
            truncated: false,
        };
        let priority = rng.uniform() * 5.0;
        memory.push(&t, priority).expect("valid transition");
    }
    memory
}
