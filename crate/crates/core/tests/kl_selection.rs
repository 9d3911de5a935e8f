mod common;

use common::{kl_monte_carlo, planted_trial, random_matrix, random_net, random_spd};
use dper_core::dper::{
    action_deviation, argmin_eta, generator_stats, kl_score_diag, kl_score_full, score_candidates,
    select_actor_batch, GeneratorStats, KlMode, KlReference, DEFAULT_JITTER,
};
use dper_core::nn::{Matrix, MlpParams, OutputActivation, Rng};
use dper_core::replay::{Batch, SampleMeta};
use proptest::prelude::*;

fn stats(mu: Vec<f64>, sigma: Matrix) -> GeneratorStats {
    GeneratorStats {
        mu,
        sigma,
        eta: None,
    }
}

fn scaled_identity(m: usize, s: f64) -> Matrix {
    let mut i = Matrix::identity(m);
    i.scale(s);
    i
}

#[test]
fn univariate_closed_form_agrees_with_monte_carlo() {
    let reference = KlReference::new(1.0, 1).unwrap();
    let eta = kl_score_full(&stats(vec![0.0], Matrix::from_rows(&[[2.0]])), &reference).unwrap();
    let expected = 0.5 * (2.0 - 1.0 + (0.5f64).ln());
    assert!((eta - expected).abs() < 1e-12);
    let mc = kl_monte_carlo(
        &[0.0],
        &Matrix::from_rows(&[[2.0]]),
        1.0,
        1_000_000,
        &mut Rng::new(5),
    );
    assert!(
        (mc - expected).abs() / expected < 0.02,
        "mc {mc} vs {expected}"
    );
}

#[test]
fn multivariate_closed_form_agrees_with_monte_carlo() {
    let mut rng = Rng::new(11);
    for case in 0..12 {
        let m = [1, 2, 4][case % 3];
        let mu: Vec<f64> = (0..m).map(|_| rng.normal(0.0, 0.5)).collect();
        let sigma = random_spd(&mut rng, m, 0.6, 0.1);
        let s = rng.uniform_range(0.3, 2.0);
        let reference = KlReference::new(s, m).unwrap();
        let eta = kl_score_full(&stats(mu.clone(), sigma.clone()), &reference).unwrap();
        let mc = kl_monte_carlo(&mu, &sigma, s, 400_000, &mut rng);
        assert!(
            (eta - mc).abs() / eta.abs().max(1e-3) < 0.03,
            "case {case} m={m}: closed {eta} vs mc {mc}"
        );
    }
}

#[test]
fn on_policy_distribution_scores_zero() {
    for m in [1, 2, 4] {
        let s = 0.04;
        let reference = KlReference::new(s, m).unwrap();
        let eta = kl_score_full(&stats(vec![0.0; m], scaled_identity(m, s)), &reference).unwrap();
        assert!(eta.abs() < 1e-12, "m={m}: {eta}");
        assert_eq!(kl_score_diag(&vec![0.0; m], &reference).unwrap(), 0.0);
    }
}

#[test]
fn diagonal_score_is_exact_when_covariance_is_reference() {
    let mut rng = Rng::new(17);
    for _ in 0..1000 {
        let m = 1 + rng.below(4);
        let s = rng.uniform_range(0.01, 3.0);
        let mu: Vec<f64> = (0..m).map(|_| rng.normal(0.0, 1.0)).collect();
        let reference = KlReference::new(s, m).unwrap();
        let full = kl_score_full(&stats(mu.clone(), scaled_identity(m, s)), &reference).unwrap();
        let diag = kl_score_diag(&mu, &reference).unwrap();
        assert!((full - diag).abs() <= 1e-10, "{full} vs {diag}");
    }
}

#[test]
fn diag_score_for_unit_mean() {
    let reference = KlReference::new(1.0, 1).unwrap();
    assert_eq!(kl_score_diag(&[1.0], &reference).unwrap(), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn full_score_is_non_negative(seed in any::<u64>(), m in 1usize..5, scale in 0.01f64..3.0) {
        let mut rng = Rng::new(seed);
        let mu: Vec<f64> = (0..m).map(|_| rng.normal(0.0, scale)).collect();
        let sigma = random_spd(&mut rng, m, scale, 1e-6);
        let reference = KlReference::new(rng.uniform_range(1e-3, 4.0), m).unwrap();
        let eta = kl_score_full(&stats(mu, sigma), &reference).unwrap();
        prop_assert!(eta.is_finite() && eta >= -1e-10);
    }

    #[test]
    fn diag_score_increases_with_mean_norm(
        seed in any::<u64>(), m in 1usize..5, grow in 1.0001f64..10.0,
    ) {
        let mut rng = Rng::new(seed);
        let mu: Vec<f64> = (0..m).map(|_| rng.normal(0.0, 1.0)).collect();
        prop_assume!(mu.iter().any(|v| v.abs() > 1e-6));
        let larger: Vec<f64> = mu.iter().map(|v| v * grow).collect();
        let reference = KlReference::new(0.04, m).unwrap();
        prop_assert!(kl_score_diag(&larger, &reference).unwrap() > kl_score_diag(&mu, &reference).unwrap());
    }

    #[test]
    fn selection_is_invariant_to_positive_scaling(
        etas in prop::collection::vec(0.0f64..100.0, 1..8),
        factor in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = etas.iter().map(|e| e * factor).collect();
        prop_assert_eq!(argmin_eta(&etas), argmin_eta(&scaled));
    }
}

#[test]
fn ties_resolve_to_lowest_index() {
    assert_eq!(argmin_eta(&[0.3, 0.1, 0.1]), Some(1));
    assert_eq!(argmin_eta(&[]), None);
}

/// Centered `b × m` block whose unbiased sample covariance is exactly `s·I`.
fn whitened_block(rng: &mut Rng, b: usize, m: usize, s: f64) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for _ in 0..m {
        let mut c: Vec<f64> = (0..b).map(|_| rng.normal(0.0, 1.0)).collect();
        let mean = c.iter().sum::<f64>() / b as f64;
        c.iter_mut().for_each(|v| *v -= mean);
        for prev in &cols {
            let dot: f64 = c.iter().zip(prev).map(|(a, p)| a * p).sum();
            c.iter_mut().zip(prev).for_each(|(v, p)| *v -= dot * p);
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter_mut().for_each(|v| *v /= norm);
        cols.push(c);
    }
    let scale = (s * (b - 1) as f64).sqrt();
    (0..b)
        .map(|i| cols.iter().map(|c| c[i] * scale).collect())
        .collect()
}

#[test]
fn kl_argmin_matches_mse_argmin_for_reference_covariance() {
    let mut rng = Rng::new(23);
    let (b, m, s) = (64, 2, 0.04);
    let actor = MlpParams::zeros(3, 8, m, OutputActivation::Identity);
    let reference = KlReference::new(s, m).unwrap();
    for trial in 0..50 {
        let k = 2 + rng.below(5);
        let mut batches = Vec::new();
        for _ in 0..k {
            let mu: Vec<f64> = (0..m).map(|_| rng.normal(0.0, 0.3)).collect();
            let block = whitened_block(&mut rng, b, m, s);
            // The actor outputs zero, so the deviation is the negated action.
            let actions: Vec<[f64; 2]> = block
                .iter()
                .map(|row| [-(row[0] + mu[0]), -(row[1] + mu[1])])
                .collect();
            let batch = Batch {
                states: random_matrix(&mut rng, b, 3, 1.0),
                actions: Matrix::from_rows(&actions),
                rewards: vec![0.0; b],
                next_states: Matrix::zeros(b, 3),
                terminals: vec![false; b],
            };
            batches.push((batch, SampleMeta::default()));
        }
        let set = score_candidates(&actor, batches, &reference, KlMode::Full, 0.0).unwrap();
        for c in &set.candidates {
            let target = scaled_identity(m, s);
            assert!(c.stats.sigma.sub(&target).unwrap().frobenius_norm() < 1e-6);
        }
        let mse: Vec<f64> = set.candidates.iter().map(|c| c.mean_sq_deviation).collect();
        assert_eq!(Some(set.chosen), argmin_eta(&mse), "trial {trial}");
    }
}

#[test]
fn planted_on_policy_batch_is_selected() {
    let hits = (0..100).filter(|&seed| planted_trial(seed, 5, 256)).count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn deviation_matches_row_by_row_recomputation() {
    let mut rng = Rng::new(29);
    let actor = random_net(&mut rng, 4, 16, 2, OutputActivation::Tanh { bound: 1.0 });
    let batch = common::random_batch(&mut rng, 20, 4, 2);
    let dev = action_deviation(&actor, &batch).unwrap();
    for i in 0..20 {
        let a = actor.forward_one(batch.states.row(i));
        for j in 0..2 {
            let expected = a[j] - batch.actions[(i, j)];
            assert!((dev[(i, j)] - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn single_transition_deviation() {
    let mut actor = MlpParams::zeros(2, 4, 1, OutputActivation::Identity);
    actor.layers_mut()[2].bias[0] = 0.3;
    let batch = Batch {
        states: Matrix::from_rows(&[[0.5, -0.5]]),
        actions: Matrix::from_rows(&[[0.1]]),
        rewards: vec![0.0],
        next_states: Matrix::zeros(1, 2),
        terminals: vec![false],
    };
    let dev = action_deviation(&actor, &batch).unwrap();
    assert!((dev[(0, 0)] - 0.2).abs() < 1e-15);
    let wrong = Batch {
        actions: Matrix::from_rows(&[[0.1, 0.2]]),
        ..batch
    };
    assert!(action_deviation(&actor, &wrong).is_err());
}

#[test]
fn generator_stats_are_consistent_on_gaussian_rows() {
    let mut rng = Rng::new(31);
    let rows = random_matrix(&mut rng, 100_000, 1, 0.2);
    let st = generator_stats(&rows, DEFAULT_JITTER).unwrap();
    assert!(st.mu[0].abs() < 0.002);
    assert!((st.sigma[(0, 0)] - 0.04).abs() < 0.002);
    assert!(generator_stats(&Matrix::zeros(1, 1), DEFAULT_JITTER).is_err());
}

#[test]
fn covariance_is_symmetric_with_jitter_floor() {
    use nalgebra::DMatrix;
    let mut rng = Rng::new(37);
    for _ in 0..50 {
        let m = 1 + rng.below(4);
        // Fewer rows than dimensions forces a singular sample covariance.
        let b = 2 + rng.below(3);
        let dev = random_matrix(&mut rng, b, m, 1.0);
        let st = generator_stats(&dev, DEFAULT_JITTER).unwrap();
        for i in 0..m {
            for j in 0..m {
                assert!((st.sigma[(i, j)] - st.sigma[(j, i)]).abs() <= 1e-12);
            }
        }
        let sym = DMatrix::from_fn(m, m, |i, j| st.sigma[(i, j)]);
        let min_eig = sym.symmetric_eigen().eigenvalues.min();
        assert!(
            min_eig >= DEFAULT_JITTER * (1.0 - 1e-6),
            "min eigenvalue {min_eig}"
        );
        let eta = kl_score_full(&st, &KlReference::new(0.04, m).unwrap()).unwrap();
        assert!(eta.is_finite() && eta >= 0.0);
    }
}

#[test]
fn candidate_selection_leaves_priorities_alone() {
    let mut rng = Rng::new(41);
    let memory = common::filled_memory(&mut rng, 512, 300, 3, 1);
    let snapshot = memory.tree().nodes().to_vec();
    let actor = random_net(&mut rng, 3, 8, 1, OutputActivation::Tanh { bound: 2.0 });
    let reference = KlReference::from_exploration_std(0.2, 1).unwrap();
    let set = select_actor_batch(
        &memory,
        &actor,
        4,
        32,
        &reference,
        KlMode::Full,
        DEFAULT_JITTER,
        &mut rng,
    )
    .unwrap();
    assert_eq!(set.candidates.len(), 4);
    assert_eq!(memory.tree().nodes(), snapshot.as_slice());
    assert!(select_actor_batch(
        &memory,
        &actor,
        0,
        32,
        &reference,
        KlMode::Full,
        DEFAULT_JITTER,
        &mut rng
    )
    .is_err());
}
