//! Dense numeric core: matrices, the three-layer network, Adam and seeded
//! random streams.

mod adam;
mod matrix;
mod mlp;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::Matrix;
pub use mlp::{
    mlp_backward, mlp_forward, mlp_input_grad, mlp_predict, Dense, ForwardCache, Gradients,
    MlpParams, OutputActivation, INITIALIZER,
};
pub use rng::{sample_gaussian, Rng, Stream};
