//! Deterministic linear algebra and random-variate kernels.
//!
//! Everything the model needs beyond elementary arithmetic lives here:
//! Cholesky factorization of small SPD matrices, multivariate normal and
//! Wishart sampling, gamma and binomial draws, the logistic link pair, and a
//! splittable random-number stream. Dimensions stay small (the application
//! uses D = 6), so none of this is tuned for large matrices.

mod dist;
mod linalg;
mod rng;

pub use dist::{
    expit, ln1p_exp, logit, mvn_logpdf, mvn_logpdf_chol, sample_binomial, sample_gamma,
    sample_mvn, sample_wishart, sample_wishart_chol,
};
pub use linalg::{chol_lower_logdet, chol_with_jitter, cholesky_lower, SpdMatrix};
pub(crate) use linalg::symmetric_part;
pub use rng::RngStream;
