//! Sampling from unnormalized densities by simulating a controlled diffusion.
//!
//! The sampler integrates `dx = u(t, x) dt + dw` from `x_0 = 0` over a fixed
//! horizon `T` and trains the drift `u` (a small MLP) so that the terminal
//! state follows a given target density known only up to its normalizing
//! constant. Side products of a run are importance weights for the generated
//! samples, an effective-sample-size diagnostic, and two estimators of the
//! log normalizing constant (a lower bound and an unbiased one).
//!
//! Modules map onto the stages of that pipeline:
//!
//! - [`nn`]: tensors, a reverse-mode tape, MLP layers, Fourier time features
//!   and Adam — just enough machinery to differentiate through the rollout.
//! - [`targets`]: the benchmark densities (Gaussian, mixture, funnel, rings,
//!   log-Gaussian Cox process) with log-density and gradient.
//! - [`sde`]: Euler–Maruyama simulation with running control-energy and
//!   Girsanov cost accumulators.
//! - [`policy`]: drift parameterizations (zero, plain MLP, score-informed
//!   MLP, and a closed-form Gaussian oracle) plus Monte-Carlo estimators of
//!   the optimal control from uncontrolled rollouts.
//! - [`trainer`]: gradient descent on the control cost by backprop through
//!   the unrolled trajectory.
//! - [`estimators`]: weighted samples, ESS, and log-Z estimation.
//! - [`baselines`]: Hamiltonian Monte Carlo and annealed SMC for comparison.
//! - [`metrics`]: 1-D and sliced Wasserstein-2 distances, moment reports.
//!
//! Batch-level loops (simulation, per-trajectory backprop, independent
//! chains) fan out with rayon when the default `parallel` feature is on and
//! degrade to sequential iteration when it is off; results are bit-identical
//! either way because every trajectory owns a counter-derived RNG substream.

pub mod baselines;
pub mod error;
pub mod estimators;
pub(crate) mod exec;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod sde;
pub mod targets;
pub mod trainer;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
