//! Fixed-depth multilayer perceptron: `in → h → h → out` with rectifier
//! hidden units and a hand-written backward pass.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::{Matrix, Rng};

/// Activation applied to the last layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    /// Critic head.
    Identity,
    /// Actor head: `bound · tanh(z)`.
    Tanh { bound: f64 },
}

impl OutputActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Tanh { bound } => bound * z.tanh(),
        }
    }
}

/// Description of the weight initializer, recorded with experiment output.
pub const INITIALIZER: &str = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) on weights and biases";

/// One affine layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    /// Uniform on `±1/√fan_in` for weights and biases. See [`INITIALIZER`].
    pub fn uniform_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut layer = Self::zeros(fan_in, fan_out);
        for w in layer.weight.as_mut_slice() {
            *w = rng.uniform_range(-bound, bound);
        }
        for b in &mut layer.bias {
            *b = rng.uniform_range(-bound, bound);
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Weights of a three-layer network.
///
/// Every mutation bumps an internal version so a [`ForwardCache`] taken
/// before the mutation is rejected by [`mlp_backward`].
#[derive(Debug)]
pub struct MlpParams {
    layers: [Dense; 3],
    output: OutputActivation,
    id: u64,
    version: u64,
}

impl Clone for MlpParams {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            output: self.output,
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.output == other.output
    }
}

impl MlpParams {
    pub fn from_layers(layers: [Dense; 3], output: OutputActivation) -> Result<Self> {
        if layers[1].fan_in() != layers[0].fan_out() || layers[2].fan_in() != layers[1].fan_out() {
            return Err(Error::Shape {
                op: "MlpParams::from_layers",
                expected: "chained layer widths".into(),
                got: format!(
                    "{}→{}, {}→{}, {}→{}",
                    layers[0].fan_in(),
                    layers[0].fan_out(),
                    layers[1].fan_in(),
                    layers[1].fan_out(),
                    layers[2].fan_in(),
                    layers[2].fan_out()
                ),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Shape {
                    op: "MlpParams::from_layers",
                    expected: format!("layer {i} bias of {}", l.fan_out()),
                    got: format!("{}", l.bias.len()),
                });
            }
        }
        Ok(Self {
            layers,
            output,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn new_random(
        input: usize,
        hidden: usize,
        output: usize,
        activation: OutputActivation,
        rng: &mut Rng,
    ) -> Self {
        let layers = [
            Dense::uniform_init(input, hidden, rng),
            Dense::uniform_init(hidden, hidden, rng),
            Dense::uniform_init(hidden, output, rng),
        ];
        Self::from_layers(layers, activation).expect("consistent widths")
    }

    pub fn zeros(input: usize, hidden: usize, output: usize, activation: OutputActivation) -> Self {
        let layers = [
            Dense::zeros(input, hidden),
            Dense::zeros(hidden, hidden),
            Dense::zeros(hidden, output),
        ];
        Self::from_layers(layers, activation).expect("consistent widths")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].fan_out()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].fan_out()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[Dense; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense; 3] {
        self.version += 1;
        &mut self.layers
    }

    /// Flat views of the six tensors in order `W1, b1, W2, b2, W3, b3`.
    pub fn tensors(&self) -> [&[f64]; 6] {
        let [l1, l2, l3] = &self.layers;
        [
            l1.weight.as_slice(),
            &l1.bias,
            l2.weight.as_slice(),
            &l2.bias,
            l3.weight.as_slice(),
            &l3.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        self.version += 1;
        let [l1, l2, l3] = &mut self.layers;
        [
            l1.weight.as_mut_slice(),
            &mut l1.bias,
            l2.weight.as_mut_slice(),
            &mut l2.bias,
            l3.weight.as_mut_slice(),
            &mut l3.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self ← tau·source + (1 − tau)·self`, tensor by tensor.
    pub fn blend_from(&mut self, source: &MlpParams, tau: f64) {
        debug_assert_eq!(self.parameter_count(), source.parameter_count());
        let src = source.tensors();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    /// Overwrites weights with a bit-copy of `source`.
    pub fn copy_from(&mut self, source: &MlpParams) {
        let src = source.tensors();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            dst.copy_from_slice(src);
        }
    }

    /// Forward pass for a single input vector, without a cache.
    pub fn forward_one(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        let h1 = dense_vec(&self.layers[0], input, true);
        let h2 = dense_vec(&self.layers[1], &h1, true);
        let mut out = dense_vec(&self.layers[2], &h2, false);
        out.iter_mut().for_each(|v| *v = self.output.apply(*v));
        out
    }
}

fn dense_vec(layer: &Dense, x: &[f64], relu: bool) -> Vec<f64> {
    (0..layer.fan_out())
        .map(|o| {
            let z = layer.bias[o]
                + layer
                    .weight
                    .row(o)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect()
}

/// Parameter gradients, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 3],
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let l = params.layers();
        Self {
            layers: [
                Dense::zeros(l[0].fan_in(), l[0].fan_out()),
                Dense::zeros(l[1].fan_in(), l[1].fan_out()),
                Dense::zeros(l[2].fan_in(), l[2].fan_out()),
            ],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        let [l1, l2, l3] = &self.layers;
        [
            l1.weight.as_slice(),
            &l1.bias,
            l2.weight.as_slice(),
            &l2.bias,
            l3.weight.as_slice(),
            &l3.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        let [l1, l2, l3] = &mut self.layers;
        [
            l1.weight.as_mut_slice(),
            &mut l1.bias,
            l2.weight.as_mut_slice(),
            &mut l2.bias,
            l3.weight.as_mut_slice(),
            &mut l3.bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

pub(crate) const TENSOR_NAMES: [&str; 6] = ["W1", "b1", "W2", "b2", "W3", "b3"];

/// Activations recorded by [`mlp_forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    hidden1: Matrix,
    hidden2: Matrix,
    output: Matrix,
    params_id: u64,
    params_version: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

fn check_input(params: &MlpParams, input: &Matrix, op: &'static str) -> Result<()> {
    if input.cols() != params.input_dim() {
        return Err(Error::Shape {
            op,
            expected: format!("{} input columns", params.input_dim()),
            got: format!("{}", input.cols()),
        });
    }
    Ok(())
}

fn affine(layer: &Dense, x: &Matrix) -> Result<Matrix> {
    let mut z = x.matmul_t(&layer.weight)?;
    z.add_row_broadcast(&layer.bias)?;
    Ok(z)
}

/// Batched forward pass. Rows of `input` are samples.
pub fn mlp_forward(params: &MlpParams, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_input(params, input, "mlp_forward")?;
    let [l1, l2, l3] = params.layers();
    let mut hidden1 = affine(l1, input)?;
    hidden1.map_inplace(|v| v.max(0.0));
    let mut hidden2 = affine(l2, &hidden1)?;
    hidden2.map_inplace(|v| v.max(0.0));
    let mut output = affine(l3, &hidden2)?;
    let act = params.output_activation();
    output.map_inplace(|v| act.apply(v));
    let cache = ForwardCache {
        input: input.clone(),
        hidden1,
        hidden2,
        output: output.clone(),
        params_id: params.id,
        params_version: params.version,
    };
    Ok((output, cache))
}

/// Forward pass without keeping activations.
pub fn mlp_predict(params: &MlpParams, input: &Matrix) -> Result<Matrix> {
    check_input(params, input, "mlp_predict")?;
    let [l1, l2, l3] = params.layers();
    let mut h = affine(l1, input)?;
    h.map_inplace(|v| v.max(0.0));
    let mut h = affine(l2, &h)?;
    h.map_inplace(|v| v.max(0.0));
    let mut out = affine(l3, &h)?;
    let act = params.output_activation();
    out.map_inplace(|v| act.apply(v));
    Ok(out)
}

fn check_cache(params: &MlpParams, cache: &ForwardCache, output_grad: &Matrix) -> Result<()> {
    if cache.params_id != params.id || cache.params_version != params.version {
        return Err(Error::Contract(
            "forward cache does not belong to the current parameters".into(),
        ));
    }
    if output_grad.shape() != cache.output.shape() {
        return Err(Error::Shape {
            op: "mlp_backward",
            expected: format!("{}x{}", cache.output.rows(), cache.output.cols()),
            got: format!("{}x{}", output_grad.rows(), output_grad.cols()),
        });
    }
    Ok(())
}

/// Gradient through the output activation: `∂L/∂z3`.
fn output_delta(params: &MlpParams, cache: &ForwardCache, output_grad: &Matrix) -> Matrix {
    match params.output_activation() {
        OutputActivation::Identity => output_grad.clone(),
        OutputActivation::Tanh { bound } => {
            let mut d = output_grad.clone();
            for (g, y) in d.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
                let t = y / bound;
                *g *= bound * (1.0 - t * t);
            }
            d
        }
    }
}

/// Zeroes entries whose forward activation was clamped by the rectifier.
fn relu_mask(delta: &mut Matrix, activation: &Matrix) {
    for (d, a) in delta.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Backward pass for the scalar `Σ_rows output · output_grad`.
///
/// Returns parameter gradients and the gradient with respect to the input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: &Matrix,
) -> Result<(Gradients, Matrix)> {
    check_cache(params, cache, output_grad)?;
    let [l1, l2, l3] = params.layers();

    let d3 = output_delta(params, cache, output_grad);
    let g3 = Dense {
        weight: d3.t_matmul(&cache.hidden2)?,
        bias: d3.column_sums(),
    };
    let mut d2 = d3.matmul(&l3.weight)?;
    relu_mask(&mut d2, &cache.hidden2);
    let g2 = Dense {
        weight: d2.t_matmul(&cache.hidden1)?,
        bias: d2.column_sums(),
    };
    let mut d1 = d2.matmul(&l2.weight)?;
    relu_mask(&mut d1, &cache.hidden1);
    let g1 = Dense {
        weight: d1.t_matmul(&cache.input)?,
        bias: d1.column_sums(),
    };
    let input_grad = d1.matmul(&l1.weight)?;
    Ok((
        Gradients {
            layers: [g1, g2, g3],
        },
        input_grad,
    ))
}

/// Input gradient only; skips the weight-gradient products.
pub fn mlp_input_grad(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: &Matrix,
) -> Result<Matrix> {
    check_cache(params, cache, output_grad)?;
    let [l1, l2, l3] = params.layers();
    let d3 = output_delta(params, cache, output_grad);
    let mut d2 = d3.matmul(&l3.weight)?;
    relu_mask(&mut d2, &cache.hidden2);
    let mut d1 = d2.matmul(&l2.weight)?;
    relu_mask(&mut d1, &cache.hidden1);
    d1.matmul(&l1.weight)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn random_net(
        input: usize,
        hidden: usize,
        output: usize,
        act: OutputActivation,
        seed: u64,
    ) -> MlpParams {
        MlpParams::new_random(input, hidden, output, act, &mut Rng::new(seed))
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let v = (0..rows * cols)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        Matrix::from_vec(rows, cols, v).unwrap()
    }

    #[test]
    fn zero_weights_output_bias_only() {
        let mut net = MlpParams::zeros(3, 4, 2, OutputActivation::Identity);
        net.layers_mut()[2].bias = vec![0.25, -1.0];
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]);
        let (y, _) = mlp_forward(&net, &x).unwrap();
        assert_eq!(y, Matrix::from_rows(&[[0.25, -1.0], [0.25, -1.0]]));
    }

    #[test]
    fn actor_saturates_at_bound() {
        let mut net = MlpParams::zeros(1, 2, 1, OutputActivation::Tanh { bound: 2.0 });
        net.layers_mut()[2].bias = vec![1e6];
        let (y, _) = mlp_forward(&net, &Matrix::from_rows(&[[0.3]])).unwrap();
        assert_eq!(y[(0, 0)], 2.0);
    }

    #[test]
    fn forward_matches_scalar_reevaluation() {
        let net = random_net(3, 5, 2, OutputActivation::Tanh { bound: 1.5 }, 9);
        let mut rng = Rng::new(10);
        let x = random_matrix(2, 3, &mut rng);
        let (y, _) = mlp_forward(&net, &x).unwrap();
        let [l1, l2, l3] = net.layers();
        for r in 0..2 {
            let mut h1 = [0.0; 5];
            for (o, h) in h1.iter_mut().enumerate() {
                let mut z = l1.bias[o];
                for i in 0..3 {
                    z += l1.weight[(o, i)] * x[(r, i)];
                }
                *h = if z > 0.0 { z } else { 0.0 };
            }
            let mut h2 = [0.0; 5];
            for (o, h) in h2.iter_mut().enumerate() {
                let mut z = l2.bias[o];
                for i in 0..5 {
                    z += l2.weight[(o, i)] * h1[i];
                }
                *h = if z > 0.0 { z } else { 0.0 };
            }
            for o in 0..2 {
                let mut z = l3.bias[o];
                for i in 0..5 {
                    z += l3.weight[(o, i)] * h2[i];
                }
                let expect = 1.5 * z.tanh();
                assert!((y[(r, o)] - expect).abs() < 1e-14);
            }
            for (a, b) in net.forward_one(x.row(r)).iter().zip(y.row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_cotangent_zero_gradients() {
        let net = random_net(4, 6, 1, OutputActivation::Identity, 1);
        let x = random_matrix(3, 4, &mut Rng::new(2));
        let (_, cache) = mlp_forward(&net, &x).unwrap();
        let (g, dx) = mlp_backward(&net, &cache, &Matrix::zeros(3, 1)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_grad_is_input() {
        // Identity first two layers on a non-negative input make the network
        // linear in W3 with ∂/∂W3 = hidden2 = input.
        let mut net = MlpParams::zeros(2, 2, 1, OutputActivation::Identity);
        {
            let l = net.layers_mut();
            l[0].weight = Matrix::identity(2);
            l[1].weight = Matrix::identity(2);
            l[2].weight = Matrix::from_rows(&[[0.7, -0.2]]);
        }
        let x = Matrix::from_rows(&[[0.5, 2.0]]);
        let (_, cache) = mlp_forward(&net, &x).unwrap();
        let (g, _) = mlp_backward(&net, &cache, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(g.layers[2].weight, x);
        assert_eq!(g.layers[2].bias, vec![1.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = random_net(2, 3, 1, OutputActivation::Identity, 4);
        let x = random_matrix(2, 2, &mut Rng::new(5));
        let (_, cache) = mlp_forward(&net, &x).unwrap();
        net.layers_mut()[0].bias[0] += 1.0;
        let err = mlp_backward(&net, &cache, &Matrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));

        let other = net.clone();
        let (_, cache) = mlp_forward(&net, &x).unwrap();
        assert!(mlp_backward(&other, &cache, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = random_net(3, 4, 1, OutputActivation::Identity, 0);
        assert!(matches!(
            mlp_forward(&net, &Matrix::zeros(2, 2)),
            Err(Error::Shape { .. })
        ));
    }
}
