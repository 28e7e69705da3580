use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance for the symmetry check on SPD inputs.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A validated symmetric positive definite matrix with its lower Cholesky
/// factor cached.
///
/// Construction symmetrizes the input (averaging with its transpose) after
/// checking that the asymmetry is within a 1e-12 relative tolerance, then
/// requires the Cholesky factorization to succeed. Once built, the matrix is
/// immutable, so the cached factor never goes stale.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T: Scalar> {
    matrix: DMatrix<T>,
    chol: DMatrix<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    pub fn new(a: DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        let scale = a.iter().fold(0.0, |acc: f64, v| acc.max(v.as_f64().abs()));
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                let gap = (a[(i, j)].as_f64() - a[(j, i)].as_f64()).abs();
                if gap > SYMMETRY_RTOL * scale.max(1.0) {
                    return Err(Error::NotPositiveDefinite {
                        context: format!(
                            "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:e}"
                        ),
                    });
                }
            }
        }
        let sym = symmetric_part(&a);
        let chol = cholesky_lower(&sym)?;
        Ok(Self { matrix: sym, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Lower-triangular factor L with L Lᵀ equal to the stored matrix.
    pub fn chol_lower(&self) -> &DMatrix<T> {
        &self.chol
    }

    /// ln det of the stored matrix, read off the cached factor.
    pub fn logdet(&self) -> T {
        chol_lower_logdet(&self.chol)
    }

    /// Inverse computed from the cached factor and re-symmetrized.
    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        let inv = Cholesky::<T, Dyn>::pack_dirty(self.chol.clone())
            .solve(&DMatrix::identity(n, n));
        symmetric_part(&inv)
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }
}

/// (A + Aᵀ) / 2, used to remove roundoff asymmetry before factorizing.
pub(crate) fn symmetric_part<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let half = T::of(0.5);
    (a + a.transpose()).scale(half)
}

/// Lower Cholesky factor of a symmetric matrix, or `NotPositiveDefinite`.
pub fn cholesky_lower<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    Cholesky::new(a.clone())
        .map(|c| c.unpack())
        .ok_or_else(|| Error::NotPositiveDefinite {
            context: format!("{}x{} matrix has a nonpositive pivot", a.nrows(), a.ncols()),
        })
}

/// Cholesky with one retry: on failure, adds `1e-8 * trace / dim` to the
/// diagonal and tries again. Covers matrices that are positive definite in
/// exact arithmetic but marginal in floating point; anything that still fails
/// is reported as not positive definite.
pub fn chol_with_jitter<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c.unpack());
    }
    let n = a.nrows();
    let trace = a.diagonal().iter().fold(0.0, |acc, v| acc + v.as_f64());
    let jitter = T::of(1e-8 * trace / n as f64);
    let mut bumped = a.clone();
    for i in 0..n {
        bumped[(i, i)] += jitter;
    }
    cholesky_lower(&bumped)
}

/// ln det (L Lᵀ) = 2 Σ ln L_ii for a lower-triangular factor.
pub fn chol_lower_logdet<T: Scalar>(l: &DMatrix<T>) -> T {
    let two = T::of(2.0);
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc * two
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};

    #[test]
    fn factor_of_known_matrix_round_trips() {
        let a = dmatrix![4.0, 2.0; 2.0, 3.0];
        let spd = SpdMatrix::new(a.clone()).unwrap();
        let l = spd.chol_lower();
        let back = l * l.transpose();
        assert!((back - &a).amax() < 1e-12);
        assert!((spd.logdet() - (4.0f64 * 3.0 - 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // symmetric but with eigenvalues 3 and -1
        let a = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            SpdMatrix::new(a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let a = dmatrix![1.0, 0.5; 0.2, 1.0];
        assert!(matches!(
            SpdMatrix::new(a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn tiny_asymmetry_is_absorbed() {
        let a = dmatrix![1.0, 0.5 + 1e-16; 0.5, 1.0];
        let spd = SpdMatrix::new(a).unwrap();
        assert_eq!(spd.matrix()[(0, 1)], spd.matrix()[(1, 0)]);
    }

    #[test]
    fn inverse_matches_direct_solve() {
        let a = dmatrix![2.0, 0.3, 0.1; 0.3, 1.5, 0.2; 0.1, 0.2, 1.0];
        let spd = SpdMatrix::new(a.clone()).unwrap();
        let prod = spd.inverse() * a;
        assert!((prod - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn jitter_recovers_marginal_matrix() {
        // exactly singular: rank 1
        let a = dmatrix![1.0, 1.0; 1.0, 1.0];
        let l = chol_with_jitter(&a).unwrap();
        let back = &l * l.transpose();
        assert!((back - &a).amax() < 1e-6);
        assert!(cholesky_lower(&a).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let a = DMatrix::<f32>::identity(3, 3).scale(2.0);
        let spd = SpdMatrix::new(a).unwrap();
        assert!((spd.logdet() - 3.0 * 2.0f32.ln()).abs() < 1e-6);
    }
}
