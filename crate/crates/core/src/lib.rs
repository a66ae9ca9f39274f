//! Regularized fitted Q-iteration laboratory.
//!
//! The crate is split along the lines of the experiment pipeline:
//!
//! - [`mdp`]: episodic MDP simulators, certified test environments, exact dynamic
//!   programming, rollouts and concentration coefficients.
//! - [`kernel`]: kernels, Gram assembly, RKHS norms and the max-norm regularized
//!   kernel regression used as the kernel backend.
//! - [`nn`]: two-layer ReLU Q-networks with path-norm regularization.
//! - [`fqi`]: the backward fitted Q-iteration driver.
//! - [`spectral`]: Mercer spectra of dot-product kernels on the sphere and the
//!   associated sample-complexity lower bounds.
//! - [`harness`]: rate experiments, empirical assumption checks and result files.

pub mod error;
pub mod fqi;
pub mod harness;
pub mod kernel;
pub mod mdp;
pub mod nn;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
