//! Simulation of decentralized multi-task representation learning:
//! synthetic low-rank regression tasks spread over a random network, a
//! truncated spectral initialization, and diffusion-style alternating
//! gradient descent/minimization together with its baselines.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod optimizer;
pub mod rng;
pub mod spectral_init;
pub mod synth;

pub use error::{Error, Result};
