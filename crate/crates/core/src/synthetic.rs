//! Synthetic data generation from a known finite-mixture truth.
//!
//! The generator draws from exactly the model the sampler targets: county
//! effects from a finite mixture of multivariate normals, stratum effects
//! from mega-stratum-specific normals, binomial cell counts through the
//! logistic link. The realized latents are returned as a truth record so
//! recovery experiments can score posterior output against them.
//!
//! Covariates come in two designs. Domain indicators make `b` a vector of
//! per-domain intercepts, but those are absorbed by the county-effect means,
//! so only their sum is identified; per-cell normal covariates vary across
//! counties and leave `b` fully identified.
//!
//! Layout (all deterministic given the sizes): county j of J gets sampled
//! status j < I; sampled counties round-robin over the first S − U strata,
//! target counties round-robin over all S strata starting at the first of
//! the U sample-free strata; stratum s sits in mega-stratum s mod M; county
//! j sits in state j mod A, unless `cluster_states` pins each county's state
//! to its true cluster.

use serde::{Deserialize, Serialize};

use crate::data::{CellRow, Dataset, PredictionTarget, TargetRow};
use crate::error::{Error, Result};
use crate::kernels::{expit, sample_mvn, RngStream, SpdMatrix};
use crate::scalar::Scalar;

/// How cell covariates are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateDesign {
    /// x is the domain indicator vector (p = D). Per-domain constants are
    /// absorbed by the county-effect means, so only x'b plus the mean effect
    /// is identified; use this when b itself is not of interest.
    DomainIndicator,
    /// p independent N(0, 1) covariates per cell, drawn from the spec seed.
    /// Cross-county variation makes b identified.
    CellNormal { p: usize },
}

impl Default for CovariateDesign {
    fn default() -> Self {
        Self::DomainIndicator
    }
}

/// One mixture component of the true county-effect distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ClusterTruth<T: Scalar> {
    /// Mixture weight; weights must sum to 1.
    pub weight: T,
    /// Component mean (length D).
    pub mu: Vec<T>,
    /// Component covariance (D×D, SPD).
    pub sigma: Vec<Vec<T>>,
}

/// Complete description of a synthetic-data experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct TruthSpec<T: Scalar> {
    /// Number of sampled counties I.
    pub sampled_counties: usize,
    /// Total counties J ≥ I; the last J − I become prediction targets.
    pub total_counties: usize,
    /// Total strata S.
    pub strata: usize,
    /// How many of the S strata carry no sampled counties (targets only).
    #[serde(default)]
    pub unsampled_strata: usize,
    /// Mega-strata M.
    pub megas: usize,
    /// States A (ignored when `cluster_states` is set).
    pub states: usize,
    /// Domains D.
    pub domains: usize,
    /// Covariate design; fixes the covariate dimension p.
    #[serde(default)]
    pub covariates: CovariateDesign,
    /// True regression coefficients (length p).
    pub b: Vec<T>,
    /// True mixture over county effects.
    pub clusters: Vec<ClusterTruth<T>>,
    /// True stratum-effect variances, one per mega-stratum (length M).
    pub delta_sq: Vec<T>,
    /// Trials per sampled cell.
    pub cell_n: u64,
    /// Population per cell (sampled and target).
    pub cell_n_pop: u64,
    /// Assign each county's state by its true cluster (state id = cluster
    /// index + 1), making every state's composition cluster-pure.
    #[serde(default)]
    pub cluster_states: bool,
    pub seed: u64,
}

/// The realized latents behind one generated dataset, for recovery scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct TruthRecord<T: Scalar> {
    pub spec: TruthSpec<T>,
    /// County ids 1..=J, aligned with the vectors below.
    pub county_ids: Vec<u64>,
    /// True cluster index per county.
    pub cluster_of: Vec<usize>,
    /// True county effect per county (each length D).
    pub beta: Vec<Vec<T>>,
    /// Stratum ids 1..=S, aligned with `nu`.
    pub stratum_ids: Vec<u64>,
    /// True stratum effect per stratum.
    pub nu: Vec<T>,
    /// Expected state percentage 100·Σ N·p / Σ N under the realized latents,
    /// by (state id, value), ascending.
    pub expected_state_pct: Vec<(u64, T)>,
}

impl<T: Scalar> TruthSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let d = self.domains;
        let err = |msg: String| Err(Error::InvalidParameter(msg));
        if self.sampled_counties == 0 {
            return err("sampled_counties must be >= 1".into());
        }
        if self.total_counties < self.sampled_counties {
            return err("total_counties must be >= sampled_counties".into());
        }
        if self.strata == 0 || self.megas == 0 || self.states == 0 || d == 0 {
            return err("strata, megas, states, domains must all be >= 1".into());
        }
        if self.unsampled_strata >= self.strata {
            return err("unsampled_strata must leave at least one sampled stratum".into());
        }
        if self.unsampled_strata > 0 && self.total_counties == self.sampled_counties {
            return err("unsampled_strata needs target counties to live in".into());
        }
        let p = self.covariate_dim();
        if p == 0 {
            return err("covariate dimension must be >= 1".into());
        }
        if self.b.len() != p {
            return err(format!("b has length {}, need p = {p}", self.b.len()));
        }
        if self.delta_sq.len() != self.megas {
            return err(format!(
                "delta_sq has length {}, need M = {}",
                self.delta_sq.len(),
                self.megas
            ));
        }
        if self.delta_sq.iter().any(|v| !(*v > T::zero())) {
            return err("delta_sq entries must be positive".into());
        }
        if self.clusters.is_empty() {
            return err("need at least one cluster".into());
        }
        let total_w: T = self.clusters.iter().map(|c| c.weight).sum();
        if (total_w - T::one()).abs() > T::of(1e-9) {
            return err(format!("cluster weights sum to {total_w}, need 1"));
        }
        for (j, cl) in self.clusters.iter().enumerate() {
            if !(cl.weight > T::zero()) {
                return err(format!("cluster {j} weight must be positive"));
            }
            if cl.mu.len() != d || cl.sigma.len() != d || cl.sigma.iter().any(|r| r.len() != d) {
                return err(format!("cluster {j} dimensions must all be D = {d}"));
            }
        }
        if self.cell_n > self.cell_n_pop {
            return err("cell_n must not exceed cell_n_pop".into());
        }
        Ok(())
    }

    /// Covariate dimension implied by the design.
    pub fn covariate_dim(&self) -> usize {
        match self.covariates {
            CovariateDesign::DomainIndicator => self.domains,
            CovariateDesign::CellNormal { p } => p,
        }
    }

    fn stratum_of(&self, county: usize) -> usize {
        let sampled_strata = self.strata - self.unsampled_strata;
        if county < self.sampled_counties {
            county % sampled_strata
        } else {
            let t = county - self.sampled_counties;
            (sampled_strata + t) % self.strata
        }
    }

    fn mega_of(&self, stratum: usize) -> usize {
        stratum % self.megas
    }

    fn state_of(&self, county: usize, cluster: usize) -> usize {
        if self.cluster_states {
            cluster
        } else {
            county % self.states
        }
    }
}

/// Draws a dataset, prediction targets, and the truth record from a spec.
/// Identical specs produce identical output.
pub fn generate<T: Scalar>(
    spec: &TruthSpec<T>,
) -> Result<(Dataset<T>, PredictionTarget<T>, TruthRecord<T>)> {
    spec.validate()?;
    let d = spec.domains;
    let stream = RngStream::new(spec.seed, 0);

    let chols: Vec<SpdMatrix<T>> = spec
        .clusters
        .iter()
        .enumerate()
        .map(|(j, cl)| {
            let mat = nalgebra::DMatrix::from_fn(d, d, |r, c| cl.sigma[r][c]);
            SpdMatrix::new(mat).map_err(|e| {
                Error::InvalidParameter(format!("cluster {j} covariance not SPD: {e}"))
            })
        })
        .collect::<Result<_>>()?;

    // county latents: cluster memberships and effects
    let mut rng = stream.substream(1).rng();
    let mut cluster_of = Vec::with_capacity(spec.total_counties);
    let mut beta = Vec::with_capacity(spec.total_counties);
    for _ in 0..spec.total_counties {
        let u = T::uniform_open01(&mut rng);
        let mut acc = T::zero();
        let mut pick = spec.clusters.len() - 1;
        for (j, cl) in spec.clusters.iter().enumerate() {
            acc += cl.weight;
            if u <= acc {
                pick = j;
                break;
            }
        }
        cluster_of.push(pick);
        let mu = nalgebra::DVector::from_vec(spec.clusters[pick].mu.clone());
        beta.push(sample_mvn(&mu, chols[pick].chol_lower(), &mut rng));
    }

    // stratum latents
    let mut rng = stream.substream(2).rng();
    let nu: Vec<T> = (0..spec.strata)
        .map(|s| spec.delta_sq[spec.mega_of(s)].sqrt() * T::std_normal(&mut rng))
        .collect();

    // covariates per (county, domain) cell
    let mut rng = stream.substream(4).rng();
    let xs: Vec<Vec<Vec<T>>> = (0..spec.total_counties)
        .map(|_| {
            (0..d)
                .map(|dom| match spec.covariates {
                    CovariateDesign::DomainIndicator => {
                        (0..d).map(|j| if j == dom { T::one() } else { T::zero() }).collect()
                    }
                    CovariateDesign::CellNormal { p } => {
                        (0..p).map(|_| T::std_normal(&mut rng)).collect()
                    }
                })
                .collect()
        })
        .collect();

    // cell probabilities for every county, then observed counts for the
    // sampled ones
    let p_cell = |county: usize, dom: usize| {
        let s = spec.stratum_of(county);
        let lin: T = xs[county][dom].iter().zip(&spec.b).map(|(&x, &w)| x * w).sum();
        expit(lin + beta[county][dom] + nu[s])
    };

    let mut rng = stream.substream(3).rng();
    let mut cell_rows = Vec::with_capacity(spec.sampled_counties * d);
    let mut target_rows = Vec::with_capacity((spec.total_counties - spec.sampled_counties) * d);
    for county in 0..spec.total_counties {
        let s = spec.stratum_of(county);
        let path = (
            county as u64 + 1,
            s as u64 + 1,
            spec.mega_of(s) as u64 + 1,
            spec.state_of(county, cluster_of[county]) as u64 + 1,
        );
        for dom in 0..d {
            let x = xs[county][dom].clone();
            if county < spec.sampled_counties {
                let y = T::binomial_draw(spec.cell_n, p_cell(county, dom), &mut rng);
                cell_rows.push(CellRow {
                    county_id: path.0,
                    stratum_id: path.1,
                    mega_stratum_id: path.2,
                    state_id: path.3,
                    domain_id: dom + 1,
                    y,
                    n: spec.cell_n,
                    n_pop: spec.cell_n_pop,
                    x,
                });
            } else {
                target_rows.push(TargetRow {
                    county_id: path.0,
                    stratum_id: path.1,
                    mega_stratum_id: path.2,
                    state_id: path.3,
                    domain_id: dom + 1,
                    n_pop: spec.cell_n_pop,
                    x,
                });
            }
        }
    }

    // expected state percentages under the realized latents, over all
    // counties
    let n_states = if spec.cluster_states { spec.clusters.len() } else { spec.states };
    let mut expected = vec![T::zero(); n_states];
    let mut pop = vec![0u64; n_states];
    for county in 0..spec.total_counties {
        let a = spec.state_of(county, cluster_of[county]);
        for dom in 0..d {
            expected[a] += T::of(spec.cell_n_pop as f64) * p_cell(county, dom);
            pop[a] += spec.cell_n_pop;
        }
    }
    let expected_state_pct = expected
        .iter()
        .zip(&pop)
        .enumerate()
        .filter(|(_, (_, &n))| n > 0)
        .map(|(a, (&e, &n))| (a as u64 + 1, T::of(100.0) * e / T::of(n as f64)))
        .collect();

    let data = Dataset::from_rows(&cell_rows)?;
    let targets = PredictionTarget::resolve(&target_rows, &data)?;
    let record = TruthRecord {
        spec: spec.clone(),
        county_ids: (1..=spec.total_counties as u64).collect(),
        cluster_of,
        beta: beta.iter().map(|v| v.iter().copied().collect()).collect(),
        stratum_ids: (1..=spec.strata as u64).collect(),
        nu,
        expected_state_pct,
    };
    Ok((data, targets, record))
}

/// A ready-made spec of demo scale: 40 sampled + 20 target counties, 8
/// strata of which 2 are sample-free, 2 mega-strata, 5 states, 2 domains,
/// two well-separated clusters, and two identified cell-level covariates.
pub fn demo_spec<T: Scalar>(seed: u64) -> TruthSpec<T> {
    TruthSpec {
        sampled_counties: 40,
        total_counties: 60,
        strata: 8,
        unsampled_strata: 2,
        megas: 2,
        states: 5,
        domains: 2,
        covariates: CovariateDesign::CellNormal { p: 2 },
        b: vec![T::of(0.35), T::of(-0.25)],
        clusters: vec![
            ClusterTruth {
                weight: T::of(0.5),
                mu: vec![T::of(-1.8), T::of(-1.1)],
                sigma: vec![vec![T::of(0.09), T::zero()], vec![T::zero(), T::of(0.09)]],
            },
            ClusterTruth {
                weight: T::of(0.5),
                mu: vec![T::of(-0.2), T::of(0.1)],
                sigma: vec![vec![T::of(0.09), T::zero()], vec![T::zero(), T::of(0.09)]],
            },
        ],
        delta_sq: vec![T::of(0.05), T::of(0.05)],
        // 200 trials per cell pins each county effect to about 0.2 on the
        // logit scale, so the two components separate decisively; at 50 the
        // partition prior and the likelihood roughly cancel and k stays
        // ambiguous.
        cell_n: 200,
        cell_n_pop: 2000,
        cluster_states: false,
        seed,
    }
}
