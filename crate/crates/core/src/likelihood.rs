//! Binomial logistic likelihood and per-block likelihood views.
//!
//! The linear predictor for a cell is `x'b + beta[county][domain] +
//! nu[stratum]`. Each Metropolis block (b, one beta_i, one nu_s) sees the
//! same likelihood through a [`BlockView`]: a list of cells with the block's
//! design vector and an offset holding the parts of the predictor the block
//! does not own.

use nalgebra::{DMatrix, DVector};

use crate::data::{Cell, Dataset};
use crate::kernels::ln1p_exp;
use crate::scalar::Scalar;
use crate::state::ModelState;

/// Log-likelihood of one cell at linear predictor `eta`.
///
/// The binomial coefficient is omitted throughout the crate: it cancels in
/// every Metropolis ratio. Add `ln C(n, y)` to recover absolute
/// log-probabilities.
pub fn cell_loglik<T: Scalar>(y: u64, n: u64, eta: T) -> T {
    if n == 0 {
        return T::zero();
    }
    T::of(y as f64) * eta - T::of(n as f64) * ln1p_exp(eta)
}

/// The cell's linear predictor under the current state.
pub fn linear_predictor<T: Scalar>(state: &ModelState<T>, data: &Dataset<T>, cell: &Cell<T>) -> T {
    cell.x.dot(&state.b)
        + state.beta[cell.county][cell.domain]
        + state.nu[data.county(cell.county).stratum]
}

/// Log-likelihood of one county's cells (binomial coefficient omitted).
pub fn county_loglik<T: Scalar>(state: &ModelState<T>, data: &Dataset<T>, county: usize) -> T {
    data.county_cells(county)
        .iter()
        .map(|c| cell_loglik(c.y, c.n, linear_predictor(state, data, c)))
        .sum()
}

/// Log-likelihood of the full dataset (binomial coefficient omitted).
pub fn total_loglik<T: Scalar>(state: &ModelState<T>, data: &Dataset<T>) -> T {
    data.cells()
        .iter()
        .map(|c| cell_loglik(c.y, c.n, linear_predictor(state, data, c)))
        .sum()
}

/// A block's design vector for one cell, stored without allocating.
#[derive(Debug, Clone)]
pub enum Design<'a, T: Scalar> {
    /// The cell's covariate row (regression-coefficient block).
    Covariates(&'a DVector<T>),
    /// A domain indicator (county-effect block).
    Unit { index: usize, dim: usize },
    /// The scalar 1 (stratum-effect block).
    One,
}

impl<T: Scalar> Design<'_, T> {
    pub fn dim(&self) -> usize {
        match self {
            Design::Covariates(x) => x.len(),
            Design::Unit { dim, .. } => *dim,
            Design::One => 1,
        }
    }

    /// z · theta.
    pub fn dot(&self, theta: &DVector<T>) -> T {
        match self {
            Design::Covariates(x) => x.dot(theta),
            Design::Unit { index, .. } => theta[*index],
            Design::One => theta[0],
        }
    }

    /// H += w z z'.
    pub fn add_outer(&self, h: &mut DMatrix<T>, w: T) {
        match self {
            Design::Covariates(x) => {
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        h[(i, j)] += w * x[i] * x[j];
                    }
                }
            }
            Design::Unit { index, .. } => h[(*index, *index)] += w,
            Design::One => h[(0, 0)] += w,
        }
    }

    /// v += c z.
    pub fn add_scaled(&self, v: &mut DVector<T>, c: T) {
        match self {
            Design::Covariates(x) => v.axpy(c, x, T::one()),
            Design::Unit { index, .. } => v[*index] += c,
            Design::One => v[0] += c,
        }
    }
}

/// One cell as seen by a block: counts, the block's design, and the part of
/// the predictor owned by the other blocks.
#[derive(Debug, Clone)]
pub struct BlockCell<'a, T: Scalar> {
    pub y: u64,
    pub n: u64,
    pub offset: T,
    pub design: Design<'a, T>,
}

/// All informative cells (n > 0) of one Metropolis block.
#[derive(Debug, Clone)]
pub struct BlockView<'a, T: Scalar> {
    pub dim: usize,
    pub cells: Vec<BlockCell<'a, T>>,
}

impl<T: Scalar> BlockView<'_, T> {
    /// Block log-likelihood at parameter value `theta`.
    pub fn loglik(&self, theta: &DVector<T>) -> T {
        self.cells
            .iter()
            .map(|c| cell_loglik(c.y, c.n, c.offset + c.design.dot(theta)))
            .sum()
    }
}

/// View of the whole dataset for the regression-coefficient block.
pub fn b_view<'a, T: Scalar>(state: &ModelState<T>, data: &'a Dataset<T>) -> BlockView<'a, T> {
    let cells = data
        .cells()
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| BlockCell {
            y: c.y,
            n: c.n,
            offset: state.beta[c.county][c.domain] + state.nu[data.county(c.county).stratum],
            design: Design::Covariates(&c.x),
        })
        .collect();
    BlockView { dim: data.p(), cells }
}

/// View of one county's cells for its county-effect block.
pub fn beta_view<'a, T: Scalar>(
    state: &ModelState<T>,
    data: &'a Dataset<T>,
    county: usize,
) -> BlockView<'a, T> {
    let stratum = data.county(county).stratum;
    let d = data.n_domains();
    let cells = data
        .county_cells(county)
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| BlockCell {
            y: c.y,
            n: c.n,
            offset: c.x.dot(&state.b) + state.nu[stratum],
            design: Design::Unit { index: c.domain, dim: d },
        })
        .collect();
    BlockView { dim: d, cells }
}

/// View of one stratum's cells for its stratum-effect block.
pub fn nu_view<'a, T: Scalar>(
    state: &ModelState<T>,
    data: &'a Dataset<T>,
    stratum: usize,
) -> BlockView<'a, T> {
    let mut cells = Vec::new();
    for &county in data.stratum_counties(stratum) {
        for c in data.county_cells(county) {
            if c.n == 0 {
                continue;
            }
            cells.push(BlockCell {
                y: c.y,
                n: c.n,
                offset: c.x.dot(&state.b) + state.beta[c.county][c.domain],
                design: Design::One,
            });
        }
    }
    BlockView { dim: 1, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CellRow, Dataset};
    use crate::state::{Atom, BaseMeasure, ClusterState, ModelState};
    use nalgebra::dvector;

    fn rows() -> Vec<CellRow<f64>> {
        vec![
            CellRow { county_id: 1, stratum_id: 1, mega_stratum_id: 1, state_id: 1, domain_id: 1, y: 3, n: 10, n_pop: 50, x: vec![1.0, 0.5] },
            CellRow { county_id: 1, stratum_id: 1, mega_stratum_id: 1, state_id: 1, domain_id: 2, y: 1, n: 4, n_pop: 40, x: vec![1.0, -0.3] },
            CellRow { county_id: 2, stratum_id: 2, mega_stratum_id: 1, state_id: 1, domain_id: 1, y: 0, n: 0, n_pop: 30, x: vec![1.0, 0.1] },
            CellRow { county_id: 2, stratum_id: 2, mega_stratum_id: 1, state_id: 1, domain_id: 2, y: 5, n: 6, n_pop: 60, x: vec![1.0, 0.9] },
        ]
    }

    fn zero_state(data: &Dataset<f64>) -> ModelState<f64> {
        let d = data.n_domains();
        let atom = Atom::new(DVector::zeros(d), DMatrix::identity(d, d)).unwrap();
        ModelState {
            b: DVector::zeros(data.p()),
            beta: vec![DVector::zeros(d); data.n_counties()],
            nu: vec![0.0; data.n_strata()],
            delta_sq: vec![1.0; data.n_megas()],
            clusters: ClusterState::single_cluster(data.n_counties(), atom),
            base: BaseMeasure::new(
                DVector::zeros(d),
                DMatrix::identity(d, d),
                DMatrix::identity(d, d),
                d as f64 + 4.0,
            )
            .unwrap(),
            alpha: 1.0,
        }
    }

    #[test]
    fn zero_effects_give_half_probability() {
        let data = Dataset::from_rows(&rows()).unwrap();
        let state = zero_state(&data);
        for cell in data.cells() {
            assert_eq!(linear_predictor(&state, &data, cell), 0.0);
        }
        assert!((cell_loglik(1u64, 1u64, 0.0f64) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn predictor_is_additive_in_nu() {
        let data = Dataset::from_rows(&rows()).unwrap();
        let mut state = zero_state(&data);
        state.b = dvector![0.7, -0.4];
        state.beta[0] = dvector![0.3, -0.1];
        let before: Vec<f64> =
            data.county_cells(0).iter().map(|c| linear_predictor(&state, &data, c)).collect();
        state.nu[0] += 2.5;
        for (cell, b) in data.county_cells(0).iter().zip(&before) {
            assert!((linear_predictor(&state, &data, cell) - b - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn predictor_is_linear_in_b() {
        let data = Dataset::from_rows(&rows()).unwrap();
        let mut state = zero_state(&data);
        state.beta[1] = dvector![0.2, 0.4];
        state.nu = vec![0.3, -0.6];
        let b1 = dvector![0.5, 1.0];
        let b2 = dvector![-0.2, 0.8];
        for cell in data.cells() {
            state.b = DVector::zeros(2);
            let at0 = linear_predictor(&state, &data, cell);
            state.b = b1.clone();
            let v1 = linear_predictor(&state, &data, cell);
            state.b = b2.clone();
            let v2 = linear_predictor(&state, &data, cell);
            state.b = &b1 + &b2;
            let v12 = linear_predictor(&state, &data, cell);
            assert!((v12 - (v1 + v2 - at0)).abs() < 1e-12);
        }
    }

    #[test]
    fn county_loglik_matches_binomial_pmf() {
        use statrs::distribution::{Binomial, Discrete};
        use statrs::function::gamma::ln_gamma;
        let data = Dataset::from_rows(&rows()).unwrap();
        let mut state = zero_state(&data);
        state.b = dvector![0.4, -0.8];
        state.beta[0] = dvector![0.6, -0.2];
        state.nu = vec![-0.3, 0.5];
        for county in 0..data.n_counties() {
            let mut reference = 0.0;
            for c in data.county_cells(county) {
                if c.n == 0 {
                    continue;
                }
                let p = crate::kernels::expit(linear_predictor(&state, &data, c));
                let pmf = Binomial::new(p, c.n).unwrap().ln_pmf(c.y);
                let coeff = ln_gamma(c.n as f64 + 1.0)
                    - ln_gamma(c.y as f64 + 1.0)
                    - ln_gamma((c.n - c.y) as f64 + 1.0);
                reference += pmf - coeff;
            }
            let got = county_loglik(&state, &data, county);
            assert!((got - reference).abs() < 1e-10, "county {county}: {got} vs {reference}");
        }
    }

    #[test]
    fn empty_county_has_zero_loglik() {
        let mut all_empty = rows();
        for r in &mut all_empty {
            r.y = 0;
            r.n = 0;
        }
        let data = Dataset::from_rows(&all_empty).unwrap();
        let state = zero_state(&data);
        assert_eq!(total_loglik(&state, &data), 0.0);
    }

    #[test]
    fn block_views_agree_with_direct_loglik() {
        let data = Dataset::from_rows(&rows()).unwrap();
        let mut state = zero_state(&data);
        state.b = dvector![0.4, -0.8];
        state.beta[0] = dvector![0.6, -0.2];
        state.beta[1] = dvector![-0.5, 0.1];
        state.nu = vec![-0.3, 0.5];

        let bv = b_view(&state, &data);
        assert!((bv.loglik(&state.b) - total_loglik(&state, &data)).abs() < 1e-12);

        for county in 0..data.n_counties() {
            let view = beta_view(&state, &data, county);
            let direct = county_loglik(&state, &data, county);
            assert!((view.loglik(&state.beta[county]) - direct).abs() < 1e-12);
        }

        let nuv = nu_view(&state, &data, 1);
        let direct = county_loglik(&state, &data, 1);
        assert!((nuv.loglik(&dvector![state.nu[1]]) - direct).abs() < 1e-12);
    }

    #[test]
    fn design_accumulators_match_dense_algebra() {
        let x = dvector![1.0, -2.0, 0.5];
        let theta = dvector![0.3, 0.1, -0.7];
        let designs: Vec<(Design<f64>, DVector<f64>)> = vec![
            (Design::Covariates(&x), x.clone()),
            (Design::Unit { index: 1, dim: 3 }, dvector![0.0, 1.0, 0.0]),
        ];
        for (design, dense) in &designs {
            assert!((design.dot(&theta) - dense.dot(&theta)).abs() < 1e-15);
            let mut h = DMatrix::<f64>::zeros(3, 3);
            design.add_outer(&mut h, 2.0);
            let want = dense * dense.transpose() * 2.0;
            assert!((h - want).amax() < 1e-15);
            let mut v = DVector::<f64>::zeros(3);
            design.add_scaled(&mut v, -1.5);
            assert!((v - dense.scale(-1.5)).amax() < 1e-15);
        }
        let one = Design::<f64>::One;
        assert_eq!(one.dim(), 1);
        assert!((one.dot(&dvector![2.2]) - 2.2).abs() < 1e-15);
    }

    #[test]
    fn loglik_order_invariant_within_tolerance() {
        let data = Dataset::from_rows(&rows()).unwrap();
        let mut state = zero_state(&data);
        state.b = dvector![0.4, -0.8];
        let mut view = beta_view(&state, &data, 0);
        let theta = dvector![0.2, -0.4];
        let a = view.loglik(&theta);
        view.cells.reverse();
        let b = view.loglik(&theta);
        assert!((a - b).abs() < 1e-12);
    }
}
