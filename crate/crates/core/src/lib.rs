//! Semi-parametric hierarchical Bayesian small area estimation for binomial
//! outcomes.
//!
//! The model is a hierarchical logistic regression for survey cells indexed by
//! county, demographic domain, and sampling stratum:
//!
//! ```text
//! y_cell ~ Binomial(n_cell, p_cell)
//! logit(p_cell) = x'b + beta[county, domain] + nu[stratum]
//! ```
//!
//! County random-effect vectors `beta[county]` follow a Dirichlet-process
//! mixture of multivariate normals, so counties cluster into groups that share
//! a normal law, with the number of groups inferred from the data. Stratum
//! effects are normal with mega-stratum-specific variances, and all
//! hyperparameters carry conjugate hyperpriors.
//!
//! The crate provides
//!
//! * [`kernels`] — linear algebra and random-variate kernels,
//! * [`data`] / [`config`] / [`state`] — the data model,
//! * [`likelihood`] — the binomial logistic likelihood,
//! * [`approx`] / [`sampler`] — the MCMC transition kernel and chain driver,
//! * [`predict`] — posterior prediction for unsampled counties, state-total
//!   simulation, and the baseline estimators,
//! * [`synthetic`] — a synthetic-data generator with recorded truth,
//! * [`geweke`] — a joint-distribution correctness test for the sampler,
//! * [`io`] — file formats for datasets, draws, and summaries.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (implemented for `f32` and `f64`). The aliases below fix the default
//! double-precision instantiation used by the CLI.

pub mod approx;
pub mod config;
pub mod data;
pub mod error;
pub mod geweke;
pub mod io;
pub mod kernels;
pub mod likelihood;
pub mod predict;
pub mod sampler;
pub mod scalar;
pub mod state;
pub mod synthetic;

pub use error::{Error, Violation};
pub use scalar::Scalar;

/// Default scalar type for chain execution.
pub type Real = f64;

/// [`data::Dataset`] at the default precision.
pub type Dataset = data::Dataset<Real>;
/// [`data::PredictionTarget`] at the default precision.
pub type PredictionTarget = data::PredictionTarget<Real>;
/// [`config::HyperConfig`] at the default precision.
pub type HyperConfig = config::HyperConfig<Real>;
/// [`state::ModelState`] at the default precision.
pub type ModelState = state::ModelState<Real>;
/// [`sampler::ChainOutput`] at the default precision.
pub type ChainOutput = sampler::ChainOutput<Real>;
/// [`synthetic::TruthSpec`] at the default precision.
pub type TruthSpec = synthetic::TruthSpec<Real>;
/// [`synthetic::TruthRecord`] at the default precision.
pub type TruthRecord = synthetic::TruthRecord<Real>;
/// [`io::RunManifest`] at the default precision.
pub type RunManifest = io::RunManifest<Real>;
