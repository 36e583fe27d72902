//! Robust Bayesian optimization under input noise.
//!
//! The crate models an objective `f` with a Gaussian process and optimizes
//! its Gaussian-smoothed counterpart `g(x) = E[f(x + xi)]`. The main
//! acquisition function, noisy-input entropy search, picks the point whose
//! observation is most informative about the robust max-value `g*`. It comes
//! in two flavors: one based on rejection sampling of sparse-spectrum
//! posterior draws and one based on expectation propagation.
//!
//! Module map:
//!
//! * [`gp`]: kernels, posterior prediction for `f` and `g`, hyperparameter fitting
//! * [`ssgp`]: random-feature posterior samples and robust max-value sampling
//! * [`ep`]: truncated-Gaussian conditioning on a max-value
//! * [`acquisition`]: NES-EP, NES-RS and the baselines, plus their optimizer
//! * [`benchmarks`]: test objectives, the gravity-assist simulator, ground truth
//! * [`harness`]: the experiment runner behind the `robust-bo` binary

pub mod acquisition;
pub mod benchmarks;
pub mod domain;
pub mod ep;
pub mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod ssgp;
pub mod stats;

pub use domain::Bounds;
pub use error::{Error, Result};
pub use gp::{Dataset, GpModel, InputNoise, KernelParams};
