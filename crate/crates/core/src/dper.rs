//! Decoupled actor-batch selection.
//!
//! For each candidate batch we fit a Gaussian to the deviations between the
//! current actor's actions and the stored ones. Its KL divergence from the
//! exploration noise `N(0, s·I)` measures how far the batch is from what the
//! current policy would have collected. Among `K` uniformly drawn candidates the actor
//! trains on the one with the lowest score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mlp_predict, Matrix, MlpParams, Rng};
use crate::replay::{Batch, ReplayMemory, SampleMeta};

/// Mean, covariance and (once scored) KL score of a transition generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorStats {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub eta: Option<f64>,
}

/// Reference distribution `N(0, variance·I)` over `action_dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlReference {
    pub variance: f64,
    pub action_dim: usize,
}

impl KlReference {
    pub fn new(variance: f64, action_dim: usize) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || action_dim == 0 {
            return Err(Error::Contract(format!(
                "KL reference needs positive variance and dimension, got {variance} / {action_dim}"
            )));
        }
        Ok(Self {
            variance,
            action_dim,
        })
    }

    /// Reference matching Gaussian exploration noise with standard deviation `std`.
    pub fn from_exploration_std(std: f64, action_dim: usize) -> Result<Self> {
        Self::new(std * std, action_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlMode {
    /// Full Gaussian KL with the estimated covariance.
    #[default]
    Full,
    /// Covariance assumed equal to the reference: `‖μ‖² / 2s`.
    Diag,
}

impl FromStr for KlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(KlMode::Full),
            "diag" => Ok(KlMode::Diag),
            other => Err(Error::Config(format!(
                "unknown kl mode `{other}` (expected full or diag)"
            ))),
        }
    }
}

impl fmt::Display for KlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KlMode::Full => "full",
            KlMode::Diag => "diag",
        })
    }
}

pub const DEFAULT_JITTER: f64 = 1e-6;

/// Rows `actor(s_i) − a_i` for every transition in `batch`.
pub fn action_deviation(actor: &MlpParams, batch: &Batch) -> Result<Matrix> {
    if batch.is_empty() {
        return Err(Error::Contract("action deviation of an empty batch".into()));
    }
    if batch.actions.cols() != actor.output_dim() {
        return Err(Error::Shape {
            op: "action_deviation",
            expected: format!("{} action columns", actor.output_dim()),
            got: format!("{}", batch.actions.cols()),
        });
    }
    mlp_predict(actor, &batch.states)?.sub(&batch.actions)
}

/// Column means and unbiased covariance of `deviation`, plus `jitter·I`.
pub fn generator_stats(deviation: &Matrix, jitter: f64) -> Result<GeneratorStats> {
    let (b, m) = deviation.shape();
    if b < 2 {
        return Err(Error::DegenerateBatch(b));
    }
    let mu = deviation.column_means();
    let mut sigma = Matrix::zeros(m, m);
    for r in 0..b {
        let row = deviation.row(r);
        for i in 0..m {
            let di = row[i] - mu[i];
            for j in i..m {
                sigma[(i, j)] += di * (row[j] - mu[j]);
            }
        }
    }
    let norm = 1.0 / (b as f64 - 1.0);
    for i in 0..m {
        for j in i..m {
            let v = sigma[(i, j)] * norm;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
        sigma[(i, i)] += jitter;
    }
    Ok(GeneratorStats {
        mu,
        sigma,
        eta: None,
    })
}

/// Lower Cholesky factor, or `None` if `a` is not positive definite.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

fn check_dim(len: usize, reference: &KlReference) -> Result<()> {
    if len != reference.action_dim {
        return Err(Error::Shape {
            op: "kl_score",
            expected: format!("{} action dimensions", reference.action_dim),
            got: format!("{len}"),
        });
    }
    Ok(())
}

/// `KL(N(μ, Σ) ‖ N(0, s·I))
///   = ½ [tr(Σ)/s + μᵀμ/s − m + m·ln s − ln det Σ]`.
pub fn kl_score_full(stats: &GeneratorStats, reference: &KlReference) -> Result<f64> {
    let m = stats.mu.len();
    check_dim(m, reference)?;
    if stats.sigma.shape() != (m, m) {
        return Err(Error::Shape {
            op: "kl_score_full",
            expected: format!("{m}x{m} covariance"),
            got: format!("{}x{}", stats.sigma.rows(), stats.sigma.cols()),
        });
    }
    let s = reference.variance;
    let l = cholesky(&stats.sigma).ok_or(Error::NotPositiveDefinite)?;
    let log_det: f64 = (0..m).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let trace: f64 = (0..m).map(|i| stats.sigma[(i, i)]).sum();
    let mu_sq: f64 = stats.mu.iter().map(|v| v * v).sum();
    let m = m as f64;
    let eta = 0.5 * (trace / s + mu_sq / s - m + m * s.ln() - log_det);
    if !eta.is_finite() {
        return Err(Error::NonFinite("KL score".into()));
    }
    Ok(eta)
}

/// `‖μ‖² / 2s`: the KL score when the covariance matches the reference.
pub fn kl_score_diag(mu: &[f64], reference: &KlReference) -> Result<f64> {
    check_dim(mu.len(), reference)?;
    Ok(mu.iter().map(|v| v * v).sum::<f64>() / (2.0 * reference.variance))
}

/// One scored candidate batch.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub batch: Batch,
    pub meta: SampleMeta,
    pub stats: GeneratorStats,
    pub eta: f64,
    /// Mean over rows of `‖actor(s_i) − a_i‖²`.
    pub mean_sq_deviation: f64,
}

/// All candidates of one selection round and the index of the winner.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
}

impl CandidateSet {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }

    pub fn into_chosen(mut self) -> Candidate {
        self.candidates.swap_remove(self.chosen)
    }

    pub fn etas(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.eta).collect()
    }
}

/// Index of the smallest score; ties go to the lowest index.
pub fn argmin_eta(etas: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &e) in etas.iter().enumerate() {
        match best {
            Some((_, b)) if e >= b => {}
            _ => best = Some((i, e)),
        }
    }
    best.map(|(i, _)| i)
}

/// Scores `batches` under `actor` and picks the most on-policy one.
pub fn score_candidates(
    actor: &MlpParams,
    batches: Vec<(Batch, SampleMeta)>,
    reference: &KlReference,
    mode: KlMode,
    jitter: f64,
) -> Result<CandidateSet> {
    if batches.is_empty() {
        return Err(Error::Contract("no candidate batches".into()));
    }
    let mut candidates = Vec::with_capacity(batches.len());
    for (batch, meta) in batches {
        let dev = action_deviation(actor, &batch)?;
        let mut stats = generator_stats(&dev, jitter)?;
        let eta = match mode {
            KlMode::Full => kl_score_full(&stats, reference)?,
            KlMode::Diag => kl_score_diag(&stats.mu, reference)?,
        };
        stats.eta = Some(eta);
        let mean_sq_deviation =
            dev.as_slice().iter().map(|v| v * v).sum::<f64>() / dev.rows() as f64;
        candidates.push(Candidate {
            batch,
            meta,
            stats,
            eta,
            mean_sq_deviation,
        });
    }
    let etas: Vec<f64> = candidates.iter().map(|c| c.eta).collect();
    let chosen = argmin_eta(&etas).expect("non-empty");
    Ok(CandidateSet { candidates, chosen })
}

/// Draws `k` uniform candidate batches of size `b` and returns them scored.
/// Priorities are not touched.
#[allow(clippy::too_many_arguments)]
pub fn select_actor_batch(
    memory: &ReplayMemory,
    actor: &MlpParams,
    k: usize,
    b: usize,
    reference: &KlReference,
    mode: KlMode,
    jitter: f64,
    rng: &mut Rng,
) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::Config("candidate count K must be at least 1".into()));
    }
    let batches = (0..k)
        .map(|_| memory.sample_uniform(b, rng))
        .collect::<Result<Vec<_>>>()?;
    score_candidates(actor, batches, reference, mode, jitter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use crate::replay::Transition;

    #[test]
    fn zero_deviation_stats() {
        let s = generator_stats(&Matrix::zeros(5, 2), 1e-6).unwrap();
        assert_eq!(s.mu, vec![0.0, 0.0]);
        assert_eq!(s.sigma, Matrix::from_rows(&[[1e-6, 0.0], [0.0, 1e-6]]));
    }

    #[test]
    fn two_row_sample_variance() {
        let s = generator_stats(&Matrix::from_rows(&[[0.0], [2.0]]), 1e-6).unwrap();
        assert_eq!(s.mu, vec![1.0]);
        assert_eq!(s.sigma[(0, 0)], 2.0 + 1e-6);
    }

    #[test]
    fn single_row_is_degenerate() {
        assert!(matches!(
            generator_stats(&Matrix::zeros(1, 3), 1e-6),
            Err(Error::DegenerateBatch(1))
        ));
    }

    #[test]
    fn identical_distributions_score_zero() {
        let r = KlReference::new(0.04, 2).unwrap();
        let stats = GeneratorStats {
            mu: vec![0.0, 0.0],
            sigma: Matrix::from_rows(&[[0.04, 0.0], [0.0, 0.04]]),
            eta: None,
        };
        assert!(kl_score_full(&stats, &r).unwrap().abs() < 1e-15);
    }

    #[test]
    fn univariate_closed_form() {
        let r = KlReference::new(1.0, 1).unwrap();
        let stats = GeneratorStats {
            mu: vec![0.0],
            sigma: Matrix::from_rows(&[[2.0]]),
            eta: None,
        };
        let expect = 0.5 * (2.0 - 1.0 + (0.5f64).ln());
        assert!((kl_score_full(&stats, &r).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.15343).abs() < 1e-5);
    }

    #[test]
    fn diag_score_values() {
        let r = KlReference::new(1.0, 1).unwrap();
        assert_eq!(kl_score_diag(&[0.0], &r).unwrap(), 0.0);
        assert_eq!(kl_score_diag(&[1.0], &r).unwrap(), 0.5);
    }

    #[test]
    fn non_pd_covariance_is_reported() {
        let r = KlReference::new(1.0, 2).unwrap();
        let stats = GeneratorStats {
            mu: vec![0.0, 0.0],
            sigma: Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]),
            eta: None,
        };
        assert!(matches!(
            kl_score_full(&stats, &r),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn argmin_ties_take_lowest_index() {
        assert_eq!(argmin_eta(&[0.3, 0.1, 0.1]), Some(1));
        assert_eq!(argmin_eta(&[0.1, 0.3]), Some(0));
        assert_eq!(argmin_eta(&[]), None);
    }

    fn constant_actor(value: f64) -> MlpParams {
        let mut actor = MlpParams::zeros(1, 2, 1, OutputActivation::Tanh { bound: 1.0 });
        actor.layers_mut()[2].bias = vec![value.atanh()];
        actor
    }

    #[test]
    fn deviation_is_actor_minus_stored() {
        let actor = constant_actor(0.3);
        let batch = Batch::from_transitions(&[Transition {
            state: vec![0.0],
            action: vec![0.1],
            reward: 0.0,
            next_state: vec![0.0],
            terminal: false,
            truncated: false,
        }])
        .unwrap();
        let dev = action_deviation(&actor, &batch).unwrap();
        assert!((dev[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn hand_set_candidates_pick_smaller_eta() {
        // Deviations with sample variance exactly 1 and means √0.2 and √0.6
        // give diag scores 0.1 and 0.3 under unit reference variance.
        let actor = constant_actor(0.0);
        let mk = |mean: f64| {
            let ts: Vec<Transition> = [-1.0, 1.0]
                .iter()
                .map(|d: &f64| Transition {
                    state: vec![0.0],
                    action: vec![-(mean + d / 2f64.sqrt())],
                    reward: 0.0,
                    next_state: vec![0.0],
                    terminal: false,
                    truncated: false,
                })
                .collect();
            (Batch::from_transitions(&ts).unwrap(), SampleMeta::default())
        };
        let r = KlReference::new(1.0, 1).unwrap();
        let set = score_candidates(
            &actor,
            vec![mk(0.2f64.sqrt()), mk(0.6f64.sqrt())],
            &r,
            KlMode::Diag,
            0.0,
        )
        .unwrap();
        let etas = set.etas();
        assert!((etas[0] - 0.1).abs() < 1e-12 && (etas[1] - 0.3).abs() < 1e-12);
        assert_eq!(set.chosen, 0);
        let full = score_candidates(
            &actor,
            vec![mk(0.6f64.sqrt()), mk(0.2f64.sqrt())],
            &r,
            KlMode::Full,
            0.0,
        )
        .unwrap();
        assert_eq!(full.chosen, 1);
    }

    #[test]
    fn single_candidate_always_chosen() {
        let mut mem = ReplayMemory::new(8, 1, 1, Default::default()).unwrap();
        for k in 0..8 {
            mem.push(
                &Transition {
                    state: vec![k as f64],
                    action: vec![0.9],
                    reward: 0.0,
                    next_state: vec![0.0],
                    terminal: false,
                    truncated: false,
                },
                0.0,
            )
            .unwrap();
        }
        let actor = constant_actor(-0.9);
        let r = KlReference::new(0.01, 1).unwrap();
        let set = select_actor_batch(
            &mem,
            &actor,
            1,
            4,
            &r,
            KlMode::Full,
            DEFAULT_JITTER,
            &mut Rng::new(0),
        )
        .unwrap();
        assert_eq!(set.candidates.len(), 1);
        assert_eq!(set.chosen, 0);
        assert!(set.chosen().eta > 10.0);
        assert!(
            select_actor_batch(&mem, &actor, 0, 4, &r, KlMode::Full, 0.0, &mut Rng::new(0))
                .is_err()
        );
    }
}
