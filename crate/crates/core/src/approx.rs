//! Normal approximation of logistic-likelihood blocks and Gaussian algebra
//! for building independence-chain proposals.
//!
//! Factors are kept in precision form (H, h = H·mean) so that improper
//! priors (H = 0) and rank-deficient likelihood information compose without
//! special cases; moments are materialized only when a proposal must be
//! drawn.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{chol_lower_logdet, cholesky_lower, expit, symmetric_part, SpdMatrix};
use crate::likelihood::BlockView;
use crate::scalar::Scalar;

/// Clamp applied to success probabilities inside the linearization so
/// weights and working responses stay finite at extreme predictors.
const P_CLAMP: f64 = 1e-6;

/// Smallest acceptable ratio of extreme Cholesky pivots when materializing
/// moments; below this the combined precision is treated as singular.
const PIVOT_RTOL: f64 = 1e-12;

/// An unnormalized Gaussian in precision form: exp(-x'Hx/2 + x'h), i.e.
/// N(mean, H⁻¹) with h = H·mean whenever H is invertible. H = 0 is the flat
/// factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor<T: Scalar> {
    precision: DMatrix<T>,
    shift: DVector<T>,
}

impl<T: Scalar> GaussianFactor<T> {
    /// The flat (improper, constant) factor.
    pub fn flat(dim: usize) -> Self {
        Self { precision: DMatrix::zeros(dim, dim), shift: DVector::zeros(dim) }
    }

    /// Builds a factor directly from (H, h), as conjugate updates produce.
    pub fn new(precision: DMatrix<T>, shift: DVector<T>) -> Result<Self> {
        if !precision.is_square() || precision.nrows() != shift.len() {
            return Err(Error::DimensionMismatch {
                expected: shift.len(),
                actual: precision.nrows(),
            });
        }
        Ok(Self { precision, shift })
    }

    pub fn from_mean_precision(mean: &DVector<T>, precision: DMatrix<T>) -> Self {
        let shift = &precision * mean;
        Self { precision, shift }
    }

    pub fn from_moments(mean: &DVector<T>, cov: &SpdMatrix<T>) -> Self {
        Self::from_mean_precision(mean, cov.inverse())
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn precision(&self) -> &DMatrix<T> {
        &self.precision
    }

    pub fn shift(&self) -> &DVector<T> {
        &self.shift
    }

    pub fn is_flat(&self) -> bool {
        self.precision.iter().all(|v| *v == T::zero())
    }

    /// Sum of two factors (product of the densities).
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(Self {
            precision: &self.precision + &other.precision,
            shift: &self.shift + &other.shift,
        })
    }

    /// log φ(x) − log φ(y) under this factor. The normalizing constant
    /// cancels, so the value is well defined even when H is only positive
    /// semi-definite.
    pub fn log_density_diff(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        let half = T::of(0.5);
        let qx = x.dot(&(&self.precision * x)) - T::of(2.0) * x.dot(&self.shift);
        let qy = y.dot(&(&self.precision * y)) - T::of(2.0) * y.dot(&self.shift);
        -half * (qx - qy)
    }
}

/// A proper Gaussian with materialized mean and factored precision, ready to
/// act as an independence proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalApprox<T: Scalar> {
    mean: DVector<T>,
    prec_chol: DMatrix<T>,
}

impl<T: Scalar> NormalApprox<T> {
    /// Materializes moments from a factor. Fails when the precision is
    /// singular (or numerically indistinguishable from singular).
    pub fn from_factor(factor: &GaussianFactor<T>) -> Result<Self> {
        let chol = cholesky_lower(factor.precision())
            .map_err(|_| Error::SingularCombinedPrecision)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..chol.nrows() {
            let v = chol[(i, i)].as_f64();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo <= hi * PIVOT_RTOL {
            return Err(Error::SingularCombinedPrecision);
        }
        let mean = Cholesky::<T, Dyn>::pack_dirty(chol.clone()).solve(&factor.shift().clone());
        Ok(Self { mean, prec_chol: chol })
    }

    pub fn from_mean_cov(mean: DVector<T>, cov: &SpdMatrix<T>) -> Result<Self> {
        let prec_chol = cholesky_lower(&cov.inverse())?;
        Ok(Self { mean, prec_chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    /// Covariance, reconstructed from the factored precision.
    pub fn cov(&self) -> DMatrix<T> {
        symmetric_part(&Cholesky::<T, Dyn>::pack_dirty(self.prec_chol.clone()).inverse())
    }

    /// Lower Cholesky factor of the precision.
    pub fn precision_chol(&self) -> &DMatrix<T> {
        &self.prec_chol
    }

    /// Draws x = mean + L⁻ᵀ z, which has covariance (L Lᵀ)⁻¹.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        let z = DVector::from_fn(self.dim(), |_, _| T::std_normal(rng));
        let w = self
            .prec_chol
            .transpose()
            .solve_upper_triangular(&z)
            .expect("precision factor has positive diagonal");
        &self.mean + w
    }

    /// Exact log density at x.
    pub fn log_density(&self, x: &DVector<T>) -> T {
        let d = T::of(self.dim() as f64);
        let ln_2pi = T::of(std::f64::consts::TAU.ln());
        let v = self.prec_chol.transpose() * (x - &self.mean);
        let half = T::of(0.5);
        -half * (d * ln_2pi - chol_lower_logdet(&self.prec_chol) + v.dot(&v))
    }
}

/// One-step linearization of a block's logistic likelihood around `theta`.
///
/// Returns the Gaussian factor with precision H = Σ w·zz' (w = n·p·(1−p),
/// p clamped to [1e-6, 1−1e-6]) and mean m₁ = theta + H⁻¹·score, encoded as
/// shift = H·theta + score so rank deficiency is representable.
pub fn likelihood_factor<T: Scalar>(
    view: &BlockView<'_, T>,
    theta: &DVector<T>,
) -> Result<GaussianFactor<T>> {
    if view.cells.iter().all(|c| c.n == 0) {
        return Err(Error::SingularInformation);
    }
    let dim = view.dim;
    let mut h = DMatrix::<T>::zeros(dim, dim);
    let mut score = DVector::<T>::zeros(dim);
    let (p_lo, p_hi) = (T::of(P_CLAMP), T::of(1.0 - P_CLAMP));
    for cell in &view.cells {
        if cell.n == 0 {
            continue;
        }
        let eta = cell.offset + cell.design.dot(theta);
        let p = expit(eta).clamp(p_lo, p_hi);
        let n = T::of(cell.n as f64);
        let w = n * p * (T::one() - p);
        cell.design.add_outer(&mut h, w);
        cell.design.add_scaled(&mut score, T::of(cell.y as f64) - n * p);
    }
    let shift = &h * theta + score;
    Ok(GaussianFactor { precision: h, shift })
}

/// The (m₁, V₁) normal approximation itself; requires full-rank information.
pub fn likelihood_normal_approx<T: Scalar>(
    view: &BlockView<'_, T>,
    theta: &DVector<T>,
) -> Result<NormalApprox<T>> {
    let factor = likelihood_factor(view, theta)?;
    NormalApprox::from_factor(&factor).map_err(|_| Error::SingularInformation)
}

/// Precision-weighted combination of prior and likelihood factors into the
/// proposal law: V₃⁻¹ = V₁⁻¹ + V₂⁻¹, m₃ = V₃(V₁⁻¹m₁ + V₂⁻¹m₂).
pub fn combine_normals<T: Scalar>(
    prior: &GaussianFactor<T>,
    like: &GaussianFactor<T>,
) -> Result<NormalApprox<T>> {
    NormalApprox::from_factor(&prior.add(like)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{mvn_logpdf, RngStream};
    use crate::likelihood::{BlockCell, BlockView, Design};
    use nalgebra::{dmatrix, dvector};

    fn scalar_view(cells: Vec<(u64, u64, f64)>) -> BlockView<'static, f64> {
        let cells = cells
            .into_iter()
            .map(|(y, n, offset)| BlockCell { y, n, offset, design: Design::One })
            .collect();
        BlockView { dim: 1, cells }
    }

    #[test]
    fn balanced_cell_at_zero_gives_weight_25_and_centered_mean() {
        let view = scalar_view(vec![(50, 100, 0.0)]);
        let factor = likelihood_factor(&view, &dvector![0.0]).unwrap();
        assert!((factor.precision()[(0, 0)] - 25.0).abs() < 1e-12);
        let approx = NormalApprox::from_factor(&factor).unwrap();
        assert!(approx.mean()[0].abs() < 1e-12);
        assert!((approx.cov()[(0, 0)] - 1.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn no_information_is_an_error() {
        let view = scalar_view(vec![(0, 0, 0.0), (0, 0, 1.0)]);
        assert!(matches!(
            likelihood_factor(&view, &dvector![0.0]),
            Err(Error::SingularInformation)
        ));
    }

    #[test]
    fn linearization_matches_hand_computation_off_center() {
        // one cell, n=10, y=7, offset 0.3, theta 0.2 -> eta = 0.5
        let view = scalar_view(vec![(7, 10, 0.3)]);
        let theta = dvector![0.2];
        let factor = likelihood_factor(&view, &theta).unwrap();
        let p = expit(0.5f64);
        let w = 10.0 * p * (1.0 - p);
        assert!((factor.precision()[(0, 0)] - w).abs() < 1e-12);
        let m1 = NormalApprox::from_factor(&factor).unwrap().mean()[0];
        let expect = 0.2 + (7.0 - 10.0 * p) / w;
        assert!((m1 - expect).abs() < 1e-12);
    }

    #[test]
    fn combine_flat_prior_returns_likelihood_moments() {
        let view = scalar_view(vec![(30, 80, -0.1)]);
        let theta = dvector![0.4];
        let factor = likelihood_factor(&view, &theta).unwrap();
        let alone = NormalApprox::from_factor(&factor).unwrap();
        let combined = combine_normals(&GaussianFactor::flat(1), &factor).unwrap();
        assert!((combined.mean()[0] - alone.mean()[0]).abs() < 1e-14);
        assert!((combined.cov()[(0, 0)] - alone.cov()[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn combine_identical_normals_halves_variance() {
        let cov = SpdMatrix::new(dmatrix![2.0f64]).unwrap();
        let f = GaussianFactor::from_moments(&dvector![0.7], &cov);
        let c = combine_normals(&f, &f).unwrap();
        assert!((c.mean()[0] - 0.7).abs() < 1e-14);
        assert!((c.cov()[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn combine_standard_pair_gives_closed_form() {
        let unit = SpdMatrix::new(dmatrix![1.0f64]).unwrap();
        let prior = GaussianFactor::from_moments(&dvector![0.0], &unit);
        let like = GaussianFactor::from_moments(&dvector![2.0], &unit);
        let c = combine_normals(&prior, &like).unwrap();
        assert!((c.mean()[0] - 1.0).abs() < 1e-14);
        assert!((c.cov()[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn singular_combination_is_rejected() {
        let flat = GaussianFactor::<f64>::flat(2);
        assert!(matches!(
            combine_normals(&flat, &flat),
            Err(Error::SingularCombinedPrecision)
        ));
        // rank-one information in 2-d with flat prior is still singular
        let rank1 = GaussianFactor::from_mean_precision(
            &dvector![0.0, 0.0],
            dmatrix![1.0, 1.0; 1.0, 1.0],
        );
        assert!(combine_normals(&flat, &rank1).is_err());
    }

    #[test]
    fn log_density_and_diff_agree_with_direct_mvn() {
        let cov = SpdMatrix::new(dmatrix![1.5f64, 0.4; 0.4, 0.8]).unwrap();
        let mean = dvector![0.3, -0.6];
        let factor = GaussianFactor::from_moments(&mean, &cov);
        let approx = NormalApprox::from_factor(&factor).unwrap();
        let x = dvector![1.0, 0.5];
        let y = dvector![-0.7, 0.2];
        let direct_x = mvn_logpdf(&x, &mean, &cov);
        let direct_y = mvn_logpdf(&y, &mean, &cov);
        assert!((approx.log_density(&x) - direct_x).abs() < 1e-12);
        assert!((approx.mean() - &mean).amax() < 1e-12);
        assert!((factor.log_density_diff(&x, &y) - (direct_x - direct_y)).abs() < 1e-12);
    }

    #[test]
    fn samples_have_target_moments() {
        let cov = SpdMatrix::new(dmatrix![2.0, 0.7; 0.7, 1.0]).unwrap();
        let mean = dvector![1.0, -1.0];
        let approx =
            NormalApprox::from_factor(&GaussianFactor::from_moments(&mean, &cov)).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        let n = 20_000;
        let mut acc = dvector![0.0, 0.0];
        let mut acc_var0 = 0.0;
        for _ in 0..n {
            let x = approx.sample(&mut rng);
            acc_var0 += (x[0] - 1.0) * (x[0] - 1.0);
            acc += x;
        }
        let m = acc / n as f64;
        assert!((m[0] - 1.0).abs() < 0.05);
        assert!((m[1] + 1.0).abs() < 0.04);
        assert!((acc_var0 / n as f64 - 2.0).abs() < 0.1);
    }
}
