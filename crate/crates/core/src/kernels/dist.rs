use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::linalg::{chol_lower_logdet, symmetric_part, SpdMatrix};
use crate::scalar::Scalar;

/// Draws from N(mean, L Lᵀ) given the lower Cholesky factor L.
pub fn sample_mvn<T: Scalar, R: Rng>(
    mean: &DVector<T>,
    chol_lower: &DMatrix<T>,
    rng: &mut R,
) -> DVector<T> {
    let z = DVector::from_fn(mean.len(), |_, _| T::std_normal(rng));
    mean + chol_lower * z
}

/// Log density of N(mean, cov) at x.
pub fn mvn_logpdf<T: Scalar>(x: &DVector<T>, mean: &DVector<T>, cov: &SpdMatrix<T>) -> T {
    mvn_logpdf_chol(x, mean, cov.chol_lower())
}

/// Log density of N(mean, L Lᵀ) at x given the lower factor L.
pub fn mvn_logpdf_chol<T: Scalar>(x: &DVector<T>, mean: &DVector<T>, chol_lower: &DMatrix<T>) -> T {
    let d = x.len();
    let diff = x - mean;
    let w = chol_lower
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let ln_2pi = T::of(std::f64::consts::TAU.ln());
    let half = T::of(0.5);
    -half * (T::of(d as f64) * ln_2pi + chol_lower_logdet(chol_lower) + w.dot(&w))
}

/// Draws W ~ Wishart(df, V) with E[W] = df V, by the Bartlett construction.
/// Requires df > dim - 1.
pub fn sample_wishart<T: Scalar, R: Rng>(
    df: T,
    scale: &SpdMatrix<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    sample_wishart_chol(df, scale.chol_lower(), rng)
}

/// Wishart draw given the lower Cholesky factor of the scale matrix.
pub fn sample_wishart_chol<T: Scalar, R: Rng>(
    df: T,
    scale_chol: &DMatrix<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let d = scale_chol.nrows();
    if df.as_f64() <= d as f64 - 1.0 {
        return Err(Error::DegreesOfFreedomTooSmall {
            df: df.as_f64(),
            dim: d,
        });
    }
    let half = T::of(0.5);
    let mut bartlett = DMatrix::<T>::zeros(d, d);
    for i in 0..d {
        let shape = (df - T::of(i as f64)) * half;
        bartlett[(i, i)] = T::gamma_draw(shape, half, rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = T::std_normal(rng);
        }
    }
    let l = scale_chol * bartlett;
    Ok(symmetric_part(&(&l * l.transpose())))
}

/// Draws from Gamma(shape, rate) with mean shape / rate.
pub fn sample_gamma<T: Scalar, R: Rng>(shape: T, rate: T, rng: &mut R) -> Result<T> {
    let (s, r) = (shape.as_f64(), rate.as_f64());
    if !(s > 0.0 && s.is_finite() && r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma requires positive finite shape and rate, got shape {s}, rate {r}"
        )));
    }
    Ok(T::gamma_draw(shape, rate, rng))
}

/// Draws from Binomial(n, p).
pub fn sample_binomial<T: Scalar, R: Rng>(n: u64, p: T, rng: &mut R) -> Result<u64> {
    let pf = p.as_f64();
    if !(0.0..=1.0).contains(&pf) {
        return Err(Error::InvalidParameter(format!(
            "binomial requires p in [0, 1], got {pf}"
        )));
    }
    Ok(T::binomial_draw(n, p, rng))
}

/// ln(p / (1 - p)) for p strictly inside (0, 1).
pub fn logit<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::DomainError(format!(
            "logit requires p in (0, 1), got {p}"
        )));
    }
    Ok(p.ln() - (T::one() - p).ln())
}

/// Inverse logit. Never overflows, and expit(x) + expit(-x) = 1 holds
/// exactly: the negative branch returns the floating-point complement of the
/// positive branch, which is exact because expit(|x|) lies in [1/2, 1].
pub fn expit<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        T::one() - expit(-x)
    }
}

/// ln(1 + e^z) without overflow for large |z|.
pub fn ln1p_exp<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
