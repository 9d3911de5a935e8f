use crate::envs::Environment;
use crate::error::Result;
use crate::nn::{MlpParams, Rng};

/// Reset seeds for the evaluation episodes derived from `eval_seed`.
pub fn episode_seeds(eval_seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = Rng::new(eval_seed);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Rolls out the deterministic policy `actor` for `episodes` full episodes
/// and returns the mean and population standard deviation of the
/// undiscounted returns.
pub fn evaluate<E: Environment + ?Sized>(
    actor: &MlpParams,
    env: &mut E,
    episodes: usize,
    eval_seed: u64,
) -> Result<(f64, f64)> {
    let returns = episode_returns(actor, env, episodes, eval_seed)?;
    Ok(mean_std(&returns))
}

pub fn episode_returns<E: Environment + ?Sized>(
    actor: &MlpParams,
    env: &mut E,
    episodes: usize,
    eval_seed: u64,
) -> Result<Vec<f64>> {
    let mut returns = Vec::with_capacity(episodes);
    for seed in episode_seeds(eval_seed, episodes) {
        let mut obs = env.reset(seed);
        let mut total = 0.0;
        loop {
            let action = actor.forward_one(&obs);
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.next_observation;
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
