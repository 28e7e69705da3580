//! Hyperparameter configuration.
//!
//! [`HyperConfig`] carries every fixed hyperparameter of the model plus the
//! sampler tuning knobs. It serializes to flat JSON whose keys are exactly
//! the field names below (`m_b`, `V_b_inv`, `a_delta`, `b_delta`, `a`, `A`,
//! `c`, `C`, `q`, `R`, `s_df`, `a_alpha`, `b_alpha`, `neal_aux_m`,
//! `iterations`, `burn_in`, `thin`, `seed`); vectors and matrices are nested
//! arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SpdMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned")
)]
pub struct HyperConfig<T: Scalar> {
    /// Prior mean of the regression coefficients b (length p).
    pub m_b: Vec<T>,
    /// Prior precision of b (p×p). The all-zero matrix selects the improper
    /// flat prior; otherwise it must be symmetric positive definite.
    #[serde(rename = "V_b_inv")]
    pub v_b_inv: Vec<Vec<T>>,
    /// Shape of the gamma prior on each stratum-effect precision 1/δ²_m.
    pub a_delta: T,
    /// Rate of the same gamma prior (mean a_delta/b_delta).
    pub b_delta: T,
    /// Prior mean of the base-measure center m (length D).
    pub a: Vec<T>,
    /// Prior covariance of m (D×D).
    #[serde(rename = "A")]
    pub a_cov: Vec<Vec<T>>,
    /// Wishart degrees of freedom for B⁻¹; must exceed D−1.
    pub c: T,
    /// Prior scale of the between-cluster covariance B: B⁻¹ ~ W[c, (cC)⁻¹],
    /// so E[B⁻¹] = C⁻¹.
    #[serde(rename = "C")]
    pub c_scale: Vec<Vec<T>>,
    /// Wishart degrees of freedom for S; must exceed D−1.
    pub q: T,
    /// Prior mean of S: S ~ W[q, R/q], so E[S] = R.
    #[serde(rename = "R")]
    pub r_scale: Vec<Vec<T>>,
    /// Wishart degrees of freedom tying cluster covariances to S:
    /// Σ⁻¹ ~ W[s_df, (s_df·S)⁻¹]; must exceed D−1.
    pub s_df: T,
    /// Shape of the gamma prior on the total-mass parameter α.
    pub a_alpha: T,
    /// Rate of the same gamma prior (mean a_alpha/b_alpha).
    pub b_alpha: T,
    /// Auxiliary-component count for the cluster reassignment step.
    pub neal_aux_m: usize,
    /// Total sweeps including burn-in.
    pub iterations: usize,
    /// Sweeps discarded before saving draws.
    pub burn_in: usize,
    /// Save every thin-th post-burn-in sweep.
    pub thin: usize,
    /// Master RNG seed.
    pub seed: u64,
}

impl<T: Scalar> HyperConfig<T> {
    /// Domain dimension D implied by the config.
    pub fn d(&self) -> usize {
        self.a.len()
    }

    /// Covariate dimension p implied by the config.
    pub fn p(&self) -> usize {
        self.m_b.len()
    }

    /// Number of draws a run will save: every thin-th sweep after burn-in.
    pub fn saved_draws(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    /// True when the flat prior on b was selected (V_b_inv = 0).
    pub fn flat_b_prior(&self) -> bool {
        self.v_b_inv.iter().flatten().all(|v| *v == T::zero())
    }

    pub fn m_b_vec(&self) -> DVector<T> {
        DVector::from_vec(self.m_b.clone())
    }

    pub fn a_vec(&self) -> DVector<T> {
        DVector::from_vec(self.a.clone())
    }

    pub fn v_b_inv_mat(&self) -> Result<DMatrix<T>> {
        matrix_of(&self.v_b_inv, "V_b_inv")
    }

    pub fn a_cov_mat(&self) -> Result<DMatrix<T>> {
        matrix_of(&self.a_cov, "A")
    }

    pub fn c_scale_mat(&self) -> Result<DMatrix<T>> {
        matrix_of(&self.c_scale, "C")
    }

    pub fn r_scale_mat(&self) -> Result<DMatrix<T>> {
        matrix_of(&self.r_scale, "R")
    }

    /// Checks every config invariant: dimensions agree internally, SPD
    /// matrices factor, Wishart degrees of freedom exceed D−1, gamma
    /// parameters are positive, and the sweep bookkeeping is sane.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let p = self.p();
        if d == 0 {
            return Err(Error::Config("a must be nonempty (D >= 1)".into()));
        }
        if p == 0 {
            return Err(Error::Config("m_b must be nonempty (p >= 1)".into()));
        }
        let v_b_inv = self.v_b_inv_mat()?;
        require_square(&v_b_inv, p, "V_b_inv")?;
        if !self.flat_b_prior() {
            SpdMatrix::new(v_b_inv)
                .map_err(|e| Error::Config(format!("V_b_inv must be zero or SPD: {e}")))?;
        }
        for (name, mat, dim) in [
            ("A", self.a_cov_mat()?, d),
            ("C", self.c_scale_mat()?, d),
            ("R", self.r_scale_mat()?, d),
        ] {
            require_square(&mat, dim, name)?;
            SpdMatrix::new(mat).map_err(|e| Error::Config(format!("{name} must be SPD: {e}")))?;
        }
        let min_df = d as f64 - 1.0;
        for (name, df) in [("c", self.c), ("q", self.q), ("s_df", self.s_df)] {
            if df.as_f64() <= min_df {
                return Err(Error::Config(format!(
                    "{name} = {df} must exceed D - 1 = {min_df}"
                )));
            }
        }
        for (name, v) in [
            ("a_delta", self.a_delta),
            ("b_delta", self.b_delta),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
        ] {
            if !(v.as_f64() > 0.0 && v.as_f64().is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive and finite")));
            }
        }
        if self.neal_aux_m == 0 {
            return Err(Error::Config("neal_aux_m must be >= 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in = {} must be < iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Checks the config against a dataset's dimensions.
    pub fn validate_for(&self, d: usize, p: usize) -> Result<()> {
        self.validate()?;
        if self.d() != d {
            return Err(Error::Config(format!(
                "config has D = {}, dataset has D = {d}",
                self.d()
            )));
        }
        if self.p() != p {
            return Err(Error::Config(format!(
                "config has p = {}, dataset has p = {p}",
                self.p()
            )));
        }
        Ok(())
    }

    /// Weakly informative defaults for a dataset with D domains and p
    /// covariates. Centers are zero, scales are order one, and all Wishart
    /// degrees of freedom sit D+4 above the minimum so every prior variance
    /// is finite.
    pub fn defaults(d: usize, p: usize, seed: u64) -> Self {
        let eye = |dim: usize, s: f64| -> Vec<Vec<T>> {
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { T::of(s) } else { T::zero() }).collect())
                .collect()
        };
        Self {
            m_b: vec![T::zero(); p],
            v_b_inv: eye(p, 0.01),
            a_delta: T::of(6.0),
            b_delta: T::of(3.0),
            a: vec![T::zero(); d],
            a_cov: eye(d, 1.0),
            c: T::of(d as f64 + 4.0),
            c_scale: eye(d, 1.0),
            q: T::of(d as f64 + 4.0),
            r_scale: eye(d, 1.0),
            s_df: T::of(d as f64 + 4.0),
            a_alpha: T::of(2.0),
            b_alpha: T::of(2.0),
            neal_aux_m: 3,
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            seed,
        }
    }
}

fn matrix_of<T: Scalar>(rows: &[Vec<T>], name: &str) -> Result<DMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn require_square<T: Scalar>(m: &DMatrix<T>, dim: usize, name: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Config(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}
