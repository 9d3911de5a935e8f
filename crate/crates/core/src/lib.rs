//! TD3 with interchangeable replay strategies. Besides uniform and
//! proportional prioritized replay, the actor can train on whichever of
//! several uniform candidate batches looks most on-policy.

// NaN must fail the parameter checks, so they are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dper;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod td3;

pub use error::{Error, Result};
pub use nn::{Matrix, MlpParams, Rng};
