//! Posterior simulation by Markov chain Monte Carlo.
//!
//! One sweep updates, in order: the regression coefficients, every county
//! random effect, every stratum effect, the stratum-effect variances, and
//! the clustering layer (assignments, cluster parameters, base-measure
//! hyperparameters, total mass). Regression, county, and stratum blocks use
//! independence Metropolis–Hastings with a one-step Newton normal
//! approximation to the logistic likelihood; everything else is exact Gibbs.

mod mh;
mod steps;

pub use mh::{accept_with_log_ratio, mh_accept_independence, mh_log_ratio};

use nalgebra::{DMatrix, DVector};

use crate::approx::{likelihood_factor, GaussianFactor, NormalApprox};
use crate::config::HyperConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::kernels::{RngStream, SpdMatrix};
use crate::likelihood::{b_view, total_loglik};
use crate::scalar::Scalar;
use crate::state::{Atom, BaseMeasure, ClusterState, ModelState};

/// Which random-effect distribution the chain targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMode {
    /// Mixture prior on county effects: cluster assignments, base-measure
    /// hyperparameters, and total mass are all updated.
    Mixture,
    /// All counties share a single normal: assignments and total mass stay
    /// fixed, only the shared (mu, Sigma) and its hyperparameters move.
    SingleCluster,
}

/// Deliberate single-site defects used by the sampler self-tests. `None`
/// is the correct chain; each other variant breaks exactly one update in a
/// way joint-distribution tests must detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Acceptance ratio evaluated with the combined proposal normal instead
    /// of the likelihood approximation, which silently drops the prior from
    /// the stationary distribution.
    WrongMhDensity,
    /// Stratum-variance Gibbs update uses half the correct rate.
    WrongDeltaRate,
    /// Each auxiliary atom is weighted by the full total mass instead of
    /// total mass / (number of auxiliaries).
    WrongAuxWeight,
}

/// Hyperparameters in the precomputed forms the updates consume.
pub(crate) struct Prepared<T: Scalar> {
    pub d: usize,
    pub p: usize,
    /// Prior factor for the regression block; flat when the precision is 0.
    pub b_prior: GaussianFactor<T>,
    /// Proper-prior sampler for the regression block, when one exists.
    pub b_prior_approx: Option<NormalApprox<T>>,
    pub a_delta: T,
    pub b_delta: T,
    pub a_vec: DVector<T>,
    pub a_chol: DMatrix<T>,
    pub a_inv: DMatrix<T>,
    pub a_inv_a: DVector<T>,
    pub c: T,
    pub c_c: DMatrix<T>,
    /// chol((cC)^{-1}): Wishart scale for the prior on the inverse of the
    /// base-measure location spread.
    pub c_c_inv_chol: DMatrix<T>,
    pub q: T,
    pub r_over_q_chol: DMatrix<T>,
    pub r_over_q_inv: DMatrix<T>,
    pub s_df: T,
    pub a_alpha: T,
    pub b_alpha: T,
    pub neal_aux_m: usize,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(config: &HyperConfig<T>) -> Result<Self> {
        config.validate()?;
        let d = config.d();
        let p = config.p();
        let m_b = config.m_b_vec();
        let v_b_inv = config.v_b_inv_mat()?;
        let (b_prior, b_prior_approx) = if config.flat_b_prior() {
            (GaussianFactor::flat(p), None)
        } else {
            let factor = GaussianFactor::from_mean_precision(&m_b, v_b_inv);
            let approx = NormalApprox::from_factor(&factor)?;
            (factor, Some(approx))
        };
        let a_cov = SpdMatrix::new(config.a_cov_mat()?)?;
        let a_vec = config.a_vec();
        let a_inv = a_cov.inverse();
        let a_inv_a = &a_inv * &a_vec;
        let c = config.c;
        let c_c = config.c_scale_mat()? * c;
        let c_c_inv = SpdMatrix::new(c_c.clone())?.inverse();
        let c_c_inv_chol = SpdMatrix::new(c_c_inv)?.chol_lower().clone();
        let q = config.q;
        let r_over_q = SpdMatrix::new(config.r_scale_mat()? / q)?;
        let r_over_q_inv = r_over_q.inverse();
        Ok(Self {
            d,
            p,
            b_prior,
            b_prior_approx,
            a_delta: config.a_delta,
            b_delta: config.b_delta,
            a_chol: a_cov.chol_lower().clone(),
            a_vec,
            a_inv,
            a_inv_a,
            c,
            c_c,
            c_c_inv_chol,
            q,
            r_over_q_chol: r_over_q.chol_lower().clone(),
            r_over_q_inv,
            s_df: config.s_df,
            a_alpha: config.a_alpha,
            b_alpha: config.b_alpha,
            neal_aux_m: config.neal_aux_m,
        })
    }
}

/// Outcome of one Metropolis–Hastings block update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOutcome {
    Accepted,
    Rejected,
    /// The block had no data, so the update was an exact draw from its
    /// conditional prior (acceptance probability one).
    PriorDraw,
}

impl BlockOutcome {
    pub fn accepted(self) -> bool {
        !matches!(self, BlockOutcome::Rejected)
    }
}

/// Per-sweep progress record.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<T: Scalar> {
    pub b_outcome: BlockOutcome,
    pub beta_accepted: usize,
    pub beta_total: usize,
    pub nu_accepted: usize,
    pub nu_total: usize,
    pub k: usize,
    pub alpha: T,
    pub loglik: T,
}

impl<T: Scalar> SweepReport<T> {
    /// Fraction of county blocks whose update was accepted, in [0, 1].
    pub fn beta_rate(&self) -> f64 {
        self.beta_accepted as f64 / self.beta_total.max(1) as f64
    }

    /// Fraction of stratum blocks whose update was accepted, in [0, 1].
    pub fn nu_rate(&self) -> f64 {
        self.nu_accepted as f64 / self.nu_total.max(1) as f64
    }
}

/// Mean acceptance rates over a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AcceptanceSummary {
    pub b_rate: f64,
    pub beta_rate: f64,
    pub nu_rate: f64,
    pub sweeps: usize,
}

/// Dimensions of the fitted dataset, carried alongside the draws so
/// downstream consumers need not re-derive them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSizes {
    pub counties: usize,
    pub strata: usize,
    pub megas: usize,
    pub states: usize,
    pub domains: usize,
    pub covariates: usize,
}

impl ChainSizes {
    pub fn of<T: Scalar>(data: &Dataset<T>) -> Self {
        Self {
            counties: data.n_counties(),
            strata: data.n_strata(),
            megas: data.n_megas(),
            states: data.n_states(),
            domains: data.n_domains(),
            covariates: data.p(),
        }
    }
}

/// One retained posterior draw: the full model state after a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedDraw<T: Scalar> {
    /// Zero-based sweep index the draw was taken at.
    pub iteration: usize,
    pub state: ModelState<T>,
    pub loglik: T,
}

impl<T: Scalar> SavedDraw<T> {
    pub fn k(&self) -> usize {
        self.state.clusters.k()
    }
}

/// Everything a posterior run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<T: Scalar> {
    pub sizes: ChainSizes,
    pub mode: ChainMode,
    pub seed: u64,
    pub stream: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: Vec<SavedDraw<T>>,
    pub acceptance: AcceptanceSummary,
}

impl<T: Scalar> ChainOutput<T> {
    /// Posterior mean of the regression coefficients.
    pub fn mean_b(&self) -> DVector<T> {
        let p = self.sizes.covariates;
        let mut acc = DVector::zeros(p);
        for draw in &self.draws {
            acc += &draw.state.b;
        }
        acc / T::of(self.draws.len().max(1) as f64)
    }

    /// Equal-tail posterior interval for one regression coefficient.
    pub fn b_interval(&self, j: usize, level: f64) -> (T, T) {
        let mut xs: Vec<T> = self.draws.iter().map(|d| d.state.b[j]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite draw"));
        let tail = (1.0 - level) / 2.0;
        (quantile_sorted(&xs, tail), quantile_sorted(&xs, 1.0 - tail))
    }

    /// Posterior distribution of the number of clusters, normalized to sum
    /// to one over the observed support.
    pub fn k_posterior(&self) -> Vec<(usize, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for draw in &self.draws {
            *counts.entry(draw.k()).or_insert(0usize) += 1;
        }
        let total = self.draws.len().max(1) as f64;
        counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total))
            .collect()
    }

    /// Most frequent number of clusters among the retained draws.
    pub fn k_mode(&self) -> usize {
        self.k_posterior()
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("non-finite share"))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Linear-interpolation quantile of an ascending-sorted, non-empty slice.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level out of [0, 1]");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The sampler: dataset, prepared hyperparameters, and mutable chain state.
pub struct Sampler<'d, T: Scalar> {
    pub(crate) data: &'d Dataset<T>,
    pub(crate) hypers: Prepared<T>,
    pub state: ModelState<T>,
    pub mode: ChainMode,
    pub mutation: Mutation,
}

impl<'d, T: Scalar> Sampler<'d, T> {
    /// Builds a sampler at the deterministic initial state.
    pub fn new(
        data: &'d Dataset<T>,
        config: &HyperConfig<T>,
        mode: ChainMode,
        mutation: Mutation,
    ) -> Result<Self> {
        config.validate_for(data.n_domains(), data.p())?;
        let hypers = Prepared::new(config)?;
        let state = initial_state(data, config, &hypers, mode)?;
        Ok(Self { data, hypers, state, mode, mutation })
    }

    /// Builds a sampler at a caller-supplied state (joint-distribution
    /// tests start sweeps from prior draws).
    pub fn from_state(
        data: &'d Dataset<T>,
        config: &HyperConfig<T>,
        state: ModelState<T>,
        mode: ChainMode,
        mutation: Mutation,
    ) -> Result<Self> {
        config.validate_for(data.n_domains(), data.p())?;
        state.validate(
            data.n_counties(),
            data.n_strata(),
            data.n_megas(),
            data.n_domains(),
            data.p(),
        )?;
        let hypers = Prepared::new(config)?;
        Ok(Self { data, hypers, state, mode, mutation })
    }

    /// One full systematic-scan sweep. Sub-streams are derived per step, and
    /// within steps per county or stratum, so a block's randomness does not
    /// depend on the update schedule.
    pub fn sweep(&mut self, stream: &RngStream) -> Result<SweepReport<T>> {
        let b_outcome = self.step_b(&stream.substream(1))?;
        let (beta_accepted, beta_total) = self.step_beta(&stream.substream(2))?;
        let (nu_accepted, nu_total) = self.step_nu(&stream.substream(3))?;
        self.step_delta(&stream.substream(4))?;
        if self.mode == ChainMode::Mixture {
            self.step_clusters(&stream.substream(5))?;
        }
        self.step_cluster_params(&stream.substream(6))?;
        self.step_base_hypers(&stream.substream(7))?;
        if self.mode == ChainMode::Mixture {
            self.step_alpha(&stream.substream(8))?;
        }
        Ok(SweepReport {
            b_outcome,
            beta_accepted,
            beta_total,
            nu_accepted,
            nu_total,
            k: self.state.clusters.k(),
            alpha: self.state.alpha,
            loglik: total_loglik(&self.state, self.data),
        })
    }
}

/// Deterministic initial state: regression coefficients at the prior mean
/// (or a short likelihood-only Newton fit under a flat prior), county and
/// stratum effects at zero, variances and total mass at their prior means,
/// every county in one cluster whose atom sits at the base-measure center.
fn initial_state<T: Scalar>(
    data: &Dataset<T>,
    config: &HyperConfig<T>,
    hypers: &Prepared<T>,
    mode: ChainMode,
) -> Result<ModelState<T>> {
    let base = BaseMeasure::new(
        hypers.a_vec.clone(),
        config.c_scale_mat()?,
        config.r_scale_mat()?,
        hypers.s_df,
    )?;
    let atom = Atom::new(hypers.a_vec.clone(), config.r_scale_mat()?)?;
    let n = data.n_counties();
    // Mixture chains start with every county in its own cluster: coalescing
    // toward the posterior k mixes freely, while growing out of one cluster
    // stalls once its covariance has inflated to cover distinct groups.
    let clusters = match mode {
        ChainMode::SingleCluster => ClusterState::single_cluster(n, atom),
        ChainMode::Mixture => {
            let labels: Vec<usize> = (0..n).collect();
            ClusterState::from_assignments(&labels, vec![atom; n])?
        }
    };
    let mut state = ModelState {
        b: if config.flat_b_prior() {
            DVector::zeros(hypers.p)
        } else {
            config.m_b_vec()
        },
        beta: vec![DVector::zeros(hypers.d); data.n_counties()],
        nu: vec![T::zero(); data.n_strata()],
        delta_sq: vec![hypers.b_delta / hypers.a_delta; data.n_megas()],
        clusters,
        base,
        alpha: hypers.a_alpha / hypers.b_alpha,
    };
    if config.flat_b_prior() {
        // A few damped Newton steps toward the likelihood mode keep the
        // first proposals sane when no prior tethers the coefficients.
        for _ in 0..4 {
            let view = b_view(&state, data);
            let Ok(factor) = likelihood_factor(&view, &state.b) else {
                break;
            };
            let Ok(approx) = NormalApprox::from_factor(&factor) else {
                break;
            };
            state.b = approx.mean().clone();
        }
    }
    Ok(state)
}

/// Runs the mixture-model chain with the configured iteration schedule and
/// seed, retaining post-burn-in draws at the configured thinning.
pub fn run_chain<T: Scalar>(data: &Dataset<T>, config: &HyperConfig<T>) -> Result<ChainOutput<T>> {
    run_chain_with(
        data,
        config,
        &RngStream::new(config.seed, 0),
        ChainMode::Mixture,
        Mutation::None,
    )
}

/// As [`run_chain`], with explicit randomness, cluster-model mode, and
/// (for self-tests) mutation choice.
pub fn run_chain_with<T: Scalar>(
    data: &Dataset<T>,
    config: &HyperConfig<T>,
    stream: &RngStream,
    mode: ChainMode,
    mutation: Mutation,
) -> Result<ChainOutput<T>> {
    let mut sampler = Sampler::new(data, config, mode, mutation)?;
    let mut draws = Vec::with_capacity(config.saved_draws());
    let mut acc = AcceptanceSummary::default();
    for t in 0..config.iterations {
        let report = sampler.sweep(&stream.substream(t as u64 + 1))?;
        acc.b_rate += if report.b_outcome.accepted() { 1.0 } else { 0.0 };
        acc.beta_rate += report.beta_rate();
        acc.nu_rate += report.nu_rate();
        acc.sweeps += 1;
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            draws.push(SavedDraw {
                iteration: t,
                state: sampler.state.clone(),
                loglik: report.loglik,
            });
        }
    }
    if acc.sweeps > 0 {
        let n = acc.sweeps as f64;
        acc.b_rate /= n;
        acc.beta_rate /= n;
        acc.nu_rate /= n;
    }
    debug_assert_eq!(draws.len(), config.saved_draws());
    Ok(ChainOutput {
        sizes: ChainSizes::of(data),
        mode,
        seed: config.seed,
        stream: stream.stream(),
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        draws,
        acceptance: acc,
    })
}

/// Convenience wrapper for the shared-normal (single-cluster) variant used
/// as the parametric baseline.
pub fn run_parametric_chain<T: Scalar>(
    data: &Dataset<T>,
    config: &HyperConfig<T>,
) -> Result<ChainOutput<T>> {
    run_chain_with(
        data,
        config,
        &RngStream::new(config.seed, 0),
        ChainMode::SingleCluster,
        Mutation::None,
    )
}

#[cfg(test)]
mod tests;
