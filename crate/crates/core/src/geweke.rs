//! Joint-distribution correctness checks for the sampler.
//!
//! Two ways of drawing from the joint law p(θ, y) are compared. The
//! marginal-conditional simulator draws θ from the prior and is exact by
//! construction. The successive-conditional simulator alternates one sweep
//! of the transition kernel under test with a fresh draw of y given θ; it
//! has the same stationary distribution exactly when the kernel is correct.
//! A discrepancy in any moment of a test statistic indicates a sampler bug,
//! and seeded bugs ([`Mutation`]) must show up as large z-scores.
//!
//! Twelve statistics are tracked: first and second moments of b₁, b₂, δ²₁,
//! α, the cluster count k, and β₁₁. Means from the two simulators are
//! compared with a two-sample z-score; the successive chain is
//! autocorrelated, so its standard error comes from batch means.

use std::fmt;

use rand::Rng;

use crate::config::HyperConfig;
use crate::data::{CellRow, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{expit, sample_mvn, sample_wishart_chol, RngStream, SpdMatrix};
use crate::likelihood::linear_predictor;
use crate::sampler::{ChainMode, Mutation, Prepared, Sampler};
use crate::scalar::Scalar;
use crate::state::{Atom, BaseMeasure, ClusterState, ModelState};

/// Shape of the synthetic problem the check runs on. Kept tiny so the
/// successive chain mixes fast and thousands of sweeps are cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GewekeSizes {
    pub counties: usize,
    pub strata: usize,
    pub megas: usize,
    pub domains: usize,
    /// Trials per cell. Small keeps the likelihood weak, so prior-handling
    /// bugs stay visible.
    pub cell_n: u64,
}

impl Default for GewekeSizes {
    fn default() -> Self {
        Self { counties: 8, strata: 4, megas: 2, domains: 2, cell_n: 5 }
    }
}

/// Hyperparameters with light enough tails that all tracked moments (and
/// the variances of their estimators) exist: the stratum-variance prior gets
/// shape 10, the Wishart degrees of freedom sit well above D, and b gets a
/// unit-precision proper prior.
pub fn conservative_config<T: Scalar>(d: usize, seed: u64) -> HyperConfig<T> {
    let mut cfg = HyperConfig::defaults(d, d, seed);
    cfg.v_b_inv = identity(d);
    cfg.a_delta = T::of(10.0);
    cfg.b_delta = T::of(9.0);
    let df = T::of(d as f64 + 10.0);
    cfg.c = df;
    cfg.q = df;
    cfg.s_df = df;
    cfg
}

fn identity<T: Scalar>(d: usize) -> Vec<Vec<T>> {
    (0..d)
        .map(|r| (0..d).map(|c| if r == c { T::one() } else { T::zero() }).collect())
        .collect()
}

/// A dataset skeleton for the check: every (county, domain) cell with
/// one-hot domain covariates, n trials, and placeholder responses. Counties
/// round-robin over strata, strata over mega-strata.
pub fn template_dataset<T: Scalar>(sizes: &GewekeSizes) -> Result<Dataset<T>> {
    if sizes.counties == 0 || sizes.strata == 0 || sizes.megas == 0 || sizes.domains == 0 {
        return Err(Error::InvalidParameter("all Geweke sizes must be >= 1".into()));
    }
    if sizes.strata > sizes.counties || sizes.megas > sizes.strata {
        return Err(Error::InvalidParameter(
            "need counties >= strata >= megas for the round-robin layout".into(),
        ));
    }
    let mut rows = Vec::with_capacity(sizes.counties * sizes.domains);
    for county in 0..sizes.counties {
        let stratum = county % sizes.strata;
        for dom in 0..sizes.domains {
            rows.push(CellRow {
                county_id: county as u64 + 1,
                stratum_id: stratum as u64 + 1,
                mega_stratum_id: (stratum % sizes.megas) as u64 + 1,
                state_id: (county % 2) as u64 + 1,
                domain_id: dom + 1,
                y: 0,
                n: sizes.cell_n,
                n_pop: sizes.cell_n,
                x: (0..sizes.domains)
                    .map(|j| if j == dom { T::one() } else { T::zero() })
                    .collect(),
            });
        }
    }
    Dataset::from_rows(&rows)
}

/// One exact draw of the full parameter state from the prior: b, the base
/// measure (m, B, S), α, the county partition by the sequential urn, cluster
/// atoms from the base measure, county and stratum effects.
pub(crate) fn sample_prior_state<T: Scalar, R: Rng>(
    prep: &Prepared<T>,
    data: &Dataset<T>,
    rng: &mut R,
) -> Result<ModelState<T>> {
    let approx = prep.b_prior_approx.as_ref().ok_or_else(|| {
        Error::Config("joint-distribution check requires a proper prior on b".into())
    })?;
    let b = approx.sample(rng);

    let m = sample_mvn(&prep.a_vec, &prep.a_chol, rng);
    let b_inv_draw = sample_wishart_chol(prep.c, &prep.c_c_inv_chol, rng)?;
    let b_cov = SpdMatrix::new(b_inv_draw)?.inverse();
    let s_draw = sample_wishart_chol(prep.q, &prep.r_over_q_chol, rng)?;
    let base = BaseMeasure::new(m, b_cov, s_draw, prep.s_df)?;

    let alpha = T::gamma_draw(prep.a_alpha, prep.b_alpha, rng);
    let delta_sq: Vec<T> = (0..data.n_megas())
        .map(|_| T::one() / T::gamma_draw(prep.a_delta, prep.b_delta, rng))
        .collect();

    // sequential urn: county i joins an occupied cluster with probability
    // size/(alpha + i), else opens a new one with a fresh atom
    let mut labels = Vec::with_capacity(data.n_counties());
    let mut sizes: Vec<usize> = Vec::new();
    let mut atoms: Vec<Atom<T>> = Vec::new();
    for i in 0..data.n_counties() {
        let total = alpha + T::of(i as f64);
        let u = T::uniform_open01(rng) * total;
        let mut acc = T::zero();
        let mut joined = None;
        for (j, &sz) in sizes.iter().enumerate() {
            acc += T::of(sz as f64);
            if u <= acc {
                joined = Some(j);
                break;
            }
        }
        match joined {
            Some(j) => {
                sizes[j] += 1;
                labels.push(j);
            }
            None => {
                labels.push(atoms.len());
                sizes.push(1);
                atoms.push(base.draw_atom(rng)?);
            }
        }
    }
    let clusters = ClusterState::from_assignments(&labels, atoms)?;

    let beta = (0..data.n_counties()).map(|i| clusters.atom_of(i).sample(rng)).collect();
    let nu = (0..data.n_strata())
        .map(|s| delta_sq[data.stratum(s).mega].sqrt() * T::std_normal(rng))
        .collect();

    let state = ModelState { b, beta, nu, delta_sq, clusters, base, alpha };
    state.validate(
        data.n_counties(),
        data.n_strata(),
        data.n_megas(),
        data.n_domains(),
        data.p(),
    )?;
    Ok(state)
}

/// Draws every cell response from Binomial(n, expit(η)) at the given state.
pub(crate) fn simulate_responses<T: Scalar, R: Rng>(
    state: &ModelState<T>,
    data: &Dataset<T>,
    rng: &mut R,
) -> Vec<u64> {
    data.cells()
        .iter()
        .map(|cell| T::binomial_draw(cell.n, expit(linear_predictor(state, data, cell)), rng))
        .collect()
}

pub const STAT_NAMES: [&str; 12] = [
    "b[1]",
    "b[2]",
    "delta_sq[1]",
    "alpha",
    "k",
    "beta[1,1]",
    "b[1]^2",
    "b[2]^2",
    "delta_sq[1]^2",
    "alpha^2",
    "k^2",
    "beta[1,1]^2",
];

fn stat_vector<T: Scalar>(state: &ModelState<T>) -> [f64; 12] {
    let base = [
        state.b[0].as_f64(),
        state.b[1].as_f64(),
        state.delta_sq[0].as_f64(),
        state.alpha.as_f64(),
        state.clusters.k() as f64,
        state.beta[0][0].as_f64(),
    ];
    let mut out = [0.0; 12];
    out[..6].copy_from_slice(&base);
    for j in 0..6 {
        out[6 + j] = base[j] * base[j];
    }
    out
}

/// Mean and standard error of the mean for independent draws.
fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and batch-means standard error for autocorrelated draws: √n batches,
/// the spread of batch means estimates the variance of the grand mean.
fn batch_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let b = (n as f64).sqrt().floor() as usize;
    let l = n / b;
    let used = b * l;
    let grand = xs[..used].iter().sum::<f64>() / used as f64;
    let spread: f64 = (0..b)
        .map(|i| {
            let m = xs[i * l..(i + 1) * l].iter().sum::<f64>() / l as f64;
            (m - grand) * (m - grand)
        })
        .sum();
    (grand, (spread / (b as f64 * (b as f64 - 1.0))).sqrt())
}

/// One tracked statistic with the two simulators' estimates and the
/// two-sample z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStat {
    pub name: &'static str,
    pub marginal_mean: f64,
    pub marginal_se: f64,
    pub successive_mean: f64,
    pub successive_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeResult {
    pub stats: Vec<GewekeStat>,
    pub marginal_draws: usize,
    pub successive_draws: usize,
}

impl GewekeResult {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    /// True when every z-score is inside the threshold.
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_abs_z() < threshold
    }
}

impl fmt::Display for GewekeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>12} {:>10} {:>12} {:>10} {:>8}",
            "statistic", "marginal", "se", "successive", "se", "z"
        )?;
        for s in &self.stats {
            writeln!(
                f,
                "{:<14} {:>12.4} {:>10.4} {:>12.4} {:>10.4} {:>8.2}",
                s.name, s.marginal_mean, s.marginal_se, s.successive_mean, s.successive_se, s.z
            )?;
        }
        write!(
            f,
            "max |z| = {:.2} ({} marginal, {} successive draws)",
            self.max_abs_z(),
            self.marginal_draws,
            self.successive_draws
        )
    }
}

/// Runs the full check: `marginal_draws` independent prior draws against
/// `successive_draws` recorded iterations of the sweep/resimulate chain
/// (after discarding a tenth as warm-up). `mutation` selects the kernel
/// variant; [`Mutation::None`] is the sampler as shipped.
pub fn geweke_check<T: Scalar>(
    config: &HyperConfig<T>,
    sizes: &GewekeSizes,
    marginal_draws: usize,
    successive_draws: usize,
    mutation: Mutation,
    stream: &RngStream,
) -> Result<GewekeResult> {
    if config.d() < 2 || config.p() != config.d() {
        return Err(Error::Config(
            "the tracked statistics need D = p >= 2 (one-hot domain covariates)".into(),
        ));
    }
    if sizes.domains != config.d() {
        return Err(Error::Config("sizes.domains must match the config dimension".into()));
    }
    if marginal_draws < 100 || successive_draws < 100 {
        return Err(Error::InvalidParameter("need at least 100 draws per simulator".into()));
    }
    let prep = Prepared::new(config)?;
    let template = template_dataset::<T>(sizes)?;

    let marg_stream = stream.substream(1);
    let mut marginal = vec![Vec::with_capacity(marginal_draws); 12];
    for t in 0..marginal_draws {
        let mut rng = marg_stream.substream(t as u64).rng();
        // the statistics are functions of the parameters alone, so the
        // response draw adds nothing here
        let state = sample_prior_state(&prep, &template, &mut rng)?;
        for (j, &v) in stat_vector(&state).iter().enumerate() {
            marginal[j].push(v);
        }
    }

    let succ_stream = stream.substream(2);
    let mut data = template;
    let mut rng_init = succ_stream.substream(0).rng();
    let mut state = sample_prior_state(&prep, &data, &mut rng_init)?;
    let y0 = simulate_responses(&state, &data, &mut rng_init);
    data.set_responses(&y0)?;

    let burn = successive_draws / 10;
    let mut successive = vec![Vec::with_capacity(successive_draws); 12];
    for t in 0..burn + successive_draws {
        let iter_stream = succ_stream.substream(t as u64 + 1);
        let mut sampler =
            Sampler::from_state(&data, config, state, ChainMode::Mixture, mutation)?;
        sampler.sweep(&iter_stream.substream(1))?;
        state = sampler.state;
        let mut rng_y = iter_stream.substream(2).rng();
        let y = simulate_responses(&state, &data, &mut rng_y);
        data.set_responses(&y)?;
        if t >= burn {
            for (j, &v) in stat_vector(&state).iter().enumerate() {
                successive[j].push(v);
            }
        }
    }

    let stats = (0..12)
        .map(|j| {
            let (m1, se1) = iid_mean_se(&marginal[j]);
            let (m2, se2) = batch_mean_se(&successive[j]);
            let denom = (se1 * se1 + se2 * se2).sqrt();
            let z = (m1 - m2) / denom;
            if !z.is_finite() {
                return Err(Error::DomainError(format!(
                    "non-finite z for {}: means {m1} vs {m2}, ses {se1} vs {se2}",
                    STAT_NAMES[j]
                )));
            }
            Ok(GewekeStat {
                name: STAT_NAMES[j],
                marginal_mean: m1,
                marginal_se: se1,
                successive_mean: m2,
                successive_se: se2,
                z,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GewekeResult { stats, marginal_draws, successive_draws })
}
