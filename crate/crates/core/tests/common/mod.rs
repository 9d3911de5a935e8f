#![allow(dead_code)]

use dper_core::nn::{Matrix, MlpParams, OutputActivation, Rng};
use dper_core::replay::{Batch, PriorityConfig, ReplayMemory, Transition};

pub fn random_net(
    rng: &mut Rng,
    input: usize,
    hidden: usize,
    output: usize,
    activation: OutputActivation,
) -> MlpParams {
    MlpParams::new_random(input, hidden, output, activation, rng)
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal(0.0, scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Central finite differences of `f` over every parameter, in the order of
/// `Gradients::flatten`.
pub fn fd_gradient(params: &MlpParams, h: f64, f: impl Fn(&MlpParams) -> f64) -> Vec<f64> {
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    let mut probe = params.clone();
    for (t, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let original = params.tensors()[t][j];
            probe.tensors_mut()[t][j] = original + h;
            let plus = f(&probe);
            probe.tensors_mut()[t][j] = original - h;
            let minus = f(&probe);
            probe.tensors_mut()[t][j] = original;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-30)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-30)
}

pub fn random_transition(rng: &mut Rng, n: usize, m: usize) -> Transition {
    let mut v = |k: usize| {
        (0..k)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect::<Vec<_>>()
    };
    let state = v(n);
    let action = v(m);
    let next_state = v(n);
    Transition {
        state,
        action,
        reward: rng.uniform_range(-2.0, 0.0),
        next_state,
        terminal: rng.uniform() < 0.1,
        truncated: false,
    }
}

pub fn random_batch(rng: &mut Rng, b: usize, n: usize, m: usize) -> Batch {
    let ts: Vec<Transition> = (0..b).map(|_| random_transition(rng, n, m)).collect();
    Batch::from_transitions(&ts).unwrap()
}

pub fn filled_memory(
    rng: &mut Rng,
    capacity: usize,
    count: usize,
    n: usize,
    m: usize,
) -> ReplayMemory {
    let mut memory = ReplayMemory::new(capacity, n, m, PriorityConfig::default()).unwrap();
    for _ in 0..count {
        let t = random_transition(rng, n, m);
        memory.push(&t, rng.uniform() * 3.0).unwrap();
    }
    memory
}

/// Smallest |pre-activation| of either hidden layer over the batch.
/// Finite differences are only meaningful away from ReLU kinks.
pub fn kink_margin(params: &MlpParams, input: &Matrix) -> f64 {
    let layers = params.layers();
    let affine = |x: &Matrix, layer: usize| {
        let mut z = x.matmul_t(&layers[layer].weight).unwrap();
        z.add_row_broadcast(&layers[layer].bias).unwrap();
        z
    };
    let z1 = affine(input, 0);
    let z2 = affine(&z1.map(|v| v.max(0.0)), 1);
    z1.as_slice()
        .iter()
        .chain(z2.as_slice())
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Monte-Carlo estimate of `KL(N(μ, Σ) ‖ N(0, s·I))` from `samples` draws.
/// Uses nalgebra's Cholesky factor `L` and writes each draw as
/// `x = μ + L·z`, so `log p(x) = −½(zᵀz + ln det Σ)` up to the shared
/// constant.
pub fn kl_monte_carlo(mu: &[f64], sigma: &Matrix, s: f64, samples: usize, rng: &mut Rng) -> f64 {
    use nalgebra::DMatrix;
    let m = mu.len();
    let sig = DMatrix::from_fn(m, m, |i, j| sigma[(i, j)]);
    let l = sig.cholesky().expect("positive definite").l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let l: Vec<f64> = (0..m * m).map(|k| l[(k / m, k % m)]).collect();
    let log_ratio = |z: &[f64], sign: f64| {
        let mut zz = 0.0;
        let mut xx = 0.0;
        for i in 0..m {
            zz += z[i] * z[i];
            let mut x = mu[i];
            for j in 0..=i {
                x += sign * l[i * m + j] * z[j];
            }
            xx += x * x;
        }
        let log_p = -0.5 * (zz + log_det);
        let log_q = -0.5 * (xx / s + m as f64 * s.ln());
        log_p - log_q
    };
    // Antithetic pairs cancel the term linear in z.
    let mut total = 0.0;
    let mut z = vec![0.0; m];
    for _ in 0..samples / 2 {
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        total += log_ratio(&z, 1.0) + log_ratio(&z, -1.0);
    }
    let samples = 2 * (samples / 2);
    total / samples as f64
}

/// Random symmetric positive-definite `m × m` matrix `A·Aᵀ + floor·I`.
pub fn random_spd(rng: &mut Rng, m: usize, scale: f64, floor: f64) -> Matrix {
    let a = random_matrix(rng, m, m, scale);
    let mut s = a.matmul_t(&a).unwrap();
    for i in 0..m {
        s.row_mut(i)[i] += floor;
    }
    s
}

/// Batch whose stored actions are `actor(states) + offset + N(0, std²)`.
pub fn batch_around_actor(
    actor: &MlpParams,
    states: &Matrix,
    offset: f64,
    std: f64,
    rng: &mut Rng,
) -> Batch {
    let mut actions = dper_core::nn::mlp_predict(actor, states).unwrap();
    actions.map_inplace(|a| a + offset);
    for v in actions.as_mut_slice() {
        *v += rng.normal(0.0, std);
    }
    let b = states.rows();
    Batch {
        states: states.clone(),
        actions,
        rewards: vec![0.0; b],
        next_states: states.clone(),
        terminals: vec![false; b],
    }
}

/// One planted-batch trial: a near-on-policy candidate hidden among `k − 1`
/// candidates whose actions are stale by `+0.5`. Returns whether DPER picked
/// the planted one.
pub fn planted_trial(seed: u64, k: usize, b: usize) -> bool {
    use dper_core::dper::{score_candidates, KlMode, KlReference, DEFAULT_JITTER};
    use dper_core::replay::SampleMeta;
    let mut rng = Rng::new(seed);
    let bound = 2.0;
    let std = 0.1 * bound;
    let actor = random_net(&mut rng, 3, 32, 1, OutputActivation::Tanh { bound });
    let planted = rng.below(k);
    let batches = (0..k)
        .map(|i| {
            let states = random_matrix(&mut rng, b, 3, 1.0);
            let offset = if i == planted { 0.0 } else { 0.5 };
            (
                batch_around_actor(&actor, &states, offset, std, &mut rng),
                SampleMeta::default(),
            )
        })
        .collect();
    let reference = KlReference::from_exploration_std(std, 1).unwrap();
    let set = score_candidates(&actor, batches, &reference, KlMode::Full, DEFAULT_JITTER).unwrap();
    set.chosen == planted
}

/// Slot frequencies over `draws` prioritized (stratified) samples taken in
/// batches of `b`.
pub fn prioritized_counts(
    memory: &ReplayMemory,
    draws: usize,
    b: usize,
    rng: &mut Rng,
) -> Vec<u64> {
    let mut counts = vec![0u64; memory.len()];
    let mut taken = 0;
    while taken < draws {
        let (_, meta) = memory.sample_prioritized(b, rng).unwrap();
        for &i in &meta.indices {
            counts[i] += 1;
        }
        taken += b;
    }
    counts
}

/// Pearson chi-square goodness-of-fit p-value of `counts` against `probs`.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = probs.iter().filter(|&&p| p > 0.0).count() - 1;
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

/// Memory holding one transition per priority, pushed in order.
pub fn memory_with_priorities(priorities: &[f64], alpha: f64, eps: f64) -> ReplayMemory {
    let mut rng = Rng::new(0);
    let mut memory =
        ReplayMemory::new(priorities.len(), 2, 1, PriorityConfig { alpha, eps }).unwrap();
    for &p in priorities {
        memory.push(&random_transition(&mut rng, 2, 1), p).unwrap();
    }
    memory
}
