use crate::error::{Error, Result};
use crate::nn::mlp::TENSOR_NAMES;
use crate::nn::{Gradients, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one or more networks updated as a single parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    /// Moments per network, per tensor, flattened.
    pub first: Vec<Vec<Vec<f64>>>,
    pub second: Vec<Vec<Vec<f64>>>,
}

impl AdamState {
    pub fn new(nets: &[&MlpParams], config: AdamConfig) -> Self {
        let zeros: Vec<Vec<Vec<f64>>> = nets
            .iter()
            .map(|n| n.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
            .collect();
        Self {
            config,
            t: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One bias-corrected Adam step over every network in `nets`.
    ///
    /// Gradients are validated before anything is written, so an error
    /// leaves both the parameters and the moments untouched.
    pub fn step(&mut self, nets: &mut [&mut MlpParams], grads: &[&Gradients]) -> Result<()> {
        if nets.len() != self.first.len() || grads.len() != nets.len() {
            return Err(Error::Contract(format!(
                "adam state tracks {} networks, got {} networks and {} gradients",
                self.first.len(),
                nets.len(),
                grads.len()
            )));
        }
        for (k, (net, g)) in nets.iter().zip(grads).enumerate() {
            for (i, ((p, gt), m)) in net
                .tensors()
                .iter()
                .zip(g.tensors())
                .zip(&self.first[k])
                .enumerate()
            {
                if p.len() != gt.len() || p.len() != m.len() {
                    return Err(Error::Shape {
                        op: "adam_step",
                        expected: format!("{} entries in net {k} {}", p.len(), TENSOR_NAMES[i]),
                        got: format!("{} gradient entries", gt.len()),
                    });
                }
                if let Some(pos) = gt.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of net {k} tensor {} at entry {pos}",
                        TENSOR_NAMES[i]
                    )));
                }
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (k, (net, g)) in nets.iter_mut().zip(grads).enumerate() {
            let g = g.tensors();
            for (i, p) in net.tensors_mut().into_iter().enumerate() {
                let m = &mut self.first[k][i];
                let v = &mut self.second[k][i];
                for j in 0..p.len() {
                    let gj = g[i][j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Single-network Adam descent step.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.step(&mut [params], &[grads])
}
