//! Flow-matching generation and editing over latent sequences.
//!
//! The crate implements the full toy-scale pipeline: the linear mixture path
//! `z_t = t*x + (1-t)*eps` and its velocity target, logit-normal flow-step
//! sampling, minibatch optimal-transport coupling, velocity fields (a
//! closed-form Gaussian oracle, a small hand-backprop MLP, and a
//! classifier-free-guidance wrapper), fixed-step ODE solvers with NFE
//! accounting, regularized latent inversion with a patch-KL correction,
//! an edit pipeline, and Fréchet/LPAPS/adherence evaluation metrics.
//!
//! Everything is deterministic given a seed: randomness comes from a
//! counter-based generator in [`rng`] and all transcendentals go through
//! `libm`, so results are bit-stable across platforms.
//!
//! The crate is `no_std` (alloc required). IO, file formats and the CLI live
//! in the companion `latentflow` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod coupling;
pub mod data;
pub mod edit;
pub mod error;
pub mod invert;
pub mod latent;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod ode;
pub mod rng;
pub mod sampler;
pub mod train;
pub mod velocity;

pub use error::{Error, Result};
pub use latent::{mix, sample_noise, target_velocity, Batch, Condition, FlowStep, LatentSeq};
pub use rng::Rng;
