//! MCMC model state: cluster structure, base measure, and all parameters.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{
    chol_with_jitter, mvn_logpdf_chol, sample_mvn, sample_wishart_chol, symmetric_part,
};
use crate::scalar::Scalar;

/// Opaque cluster identifier. Ids are allocated monotonically and never
/// reused, so no summary may depend on their values, only on the partition.
pub type ClusterId = u64;

/// A cluster atom (μ, Σ) with its Cholesky factor and precision cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T: Scalar> {
    mu: DVector<T>,
    sigma: DMatrix<T>,
    chol: DMatrix<T>,
    precision: DMatrix<T>,
}

impl<T: Scalar> Atom<T> {
    pub fn new(mu: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        if mu.len() != sigma.nrows() || !sigma.is_square() {
            return Err(Error::DimensionMismatch { expected: mu.len(), actual: sigma.nrows() });
        }
        let chol = chol_with_jitter(&sigma)?;
        let precision =
            symmetric_part(&Cholesky::<T, Dyn>::pack_dirty(chol.clone()).inverse());
        Ok(Self { mu, sigma, chol, precision })
    }

    /// Builds an atom from (μ, Σ⁻¹), as produced by Wishart draws.
    pub fn from_precision(mu: DVector<T>, precision: DMatrix<T>) -> Result<Self> {
        let prec_chol = chol_with_jitter(&precision)?;
        let sigma =
            symmetric_part(&Cholesky::<T, Dyn>::pack_dirty(prec_chol).inverse());
        Self::new(mu, sigma)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    /// Lower Cholesky factor of Σ.
    pub fn chol(&self) -> &DMatrix<T> {
        &self.chol
    }

    /// Σ⁻¹.
    pub fn precision(&self) -> &DMatrix<T> {
        &self.precision
    }

    /// Log density of N(μ, Σ) at x.
    pub fn log_density(&self, x: &DVector<T>) -> T {
        mvn_logpdf_chol(x, &self.mu, &self.chol)
    }

    /// Draws from N(μ, Σ).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        sample_mvn(&self.mu, &self.chol, rng)
    }
}

/// An occupied cluster: its atom and how many members it has.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T: Scalar> {
    pub atom: Atom<T>,
    pub size: usize,
}

/// The partition of counties into clusters plus each cluster's atom.
///
/// Asymptotically a map keyed by opaque ids; a `BTreeMap` keeps iteration
/// order deterministic so chains are byte-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState<T: Scalar> {
    assignment: Vec<ClusterId>,
    clusters: BTreeMap<ClusterId, Cluster<T>>,
    next_id: ClusterId,
}

impl<T: Scalar> ClusterState<T> {
    /// All counties in one cluster holding `atom`.
    pub fn single_cluster(n_counties: usize, atom: Atom<T>) -> Self {
        let mut clusters = BTreeMap::new();
        clusters.insert(0, Cluster { atom, size: n_counties });
        Self { assignment: vec![0; n_counties], clusters, next_id: 1 }
    }

    /// Builds a partition from a dense cluster label per county (labels
    /// 0..k, every label occupied) and one atom per label. Used when the
    /// cluster structure is drawn from the prior rather than evolved by
    /// sweeps.
    pub fn from_assignments(labels: &[usize], atoms: Vec<Atom<T>>) -> Result<Self> {
        let k = atoms.len();
        let mut sizes = vec![0usize; k];
        for &l in labels {
            if l >= k {
                return Err(Error::InvalidParameter(format!(
                    "cluster label {l} out of range for {k} atoms"
                )));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("cluster label {empty} is unused")));
        }
        let clusters = atoms
            .into_iter()
            .zip(&sizes)
            .enumerate()
            .map(|(id, (atom, &size))| (id as ClusterId, Cluster { atom, size }))
            .collect();
        let assignment = labels.iter().map(|&l| l as ClusterId).collect();
        Ok(Self { assignment, clusters, next_id: k as ClusterId })
    }

    pub fn n_counties(&self) -> usize {
        self.assignment.len()
    }

    /// Number of occupied clusters k.
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn assignment(&self, county: usize) -> ClusterId {
        self.assignment[county]
    }

    pub fn assignments(&self) -> &[ClusterId] {
        &self.assignment
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster<T> {
        &self.clusters[&id]
    }

    pub fn atom_of(&self, county: usize) -> &Atom<T> {
        &self.clusters[&self.assignment[county]].atom
    }

    /// Occupied clusters in ascending id order.
    pub fn clusters(&self) -> impl Iterator<Item = (ClusterId, &Cluster<T>)> {
        self.clusters.iter().map(|(id, c)| (*id, c))
    }

    /// Sum of cluster sizes. Equals the county count for sweep states;
    /// larger once urn extensions have been appended.
    pub fn total_mass(&self) -> usize {
        self.clusters.values().map(|c| c.size).sum()
    }

    /// Replaces one cluster's atom (parameter refresh, membership unchanged).
    pub fn set_atom(&mut self, id: ClusterId, atom: Atom<T>) {
        self.clusters.get_mut(&id).expect("cluster id exists").atom = atom;
    }

    /// Removes a county from its cluster. When the county was the last
    /// member, the cluster is dropped and its atom handed back so the caller
    /// can recycle it as an auxiliary candidate.
    pub fn detach(&mut self, county: usize) -> (ClusterId, Option<Atom<T>>) {
        let id = self.assignment[county];
        let cluster = self.clusters.get_mut(&id).expect("assigned cluster exists");
        if cluster.size == 1 {
            let orphan = self.clusters.remove(&id).expect("cluster present");
            (id, Some(orphan.atom))
        } else {
            cluster.size -= 1;
            (id, None)
        }
    }

    /// Assigns a county to an existing cluster.
    pub fn attach(&mut self, county: usize, id: ClusterId) {
        self.clusters.get_mut(&id).expect("cluster id exists").size += 1;
        self.assignment[county] = id;
    }

    /// Assigns a county to a fresh cluster holding `atom`.
    pub fn attach_new(&mut self, county: usize, atom: Atom<T>) -> ClusterId {
        let id = self.alloc_id();
        self.clusters.insert(id, Cluster { atom, size: 1 });
        self.assignment[county] = id;
        id
    }

    /// Urn extension: adds one unit of mass to an existing cluster without
    /// tracking a county (sequential predictive use).
    pub fn urn_join(&mut self, id: ClusterId) {
        self.clusters.get_mut(&id).expect("cluster id exists").size += 1;
    }

    /// Urn extension: appends a fresh single-member cluster without tracking
    /// a county.
    pub fn urn_new(&mut self, atom: Atom<T>) -> ClusterId {
        let id = self.alloc_id();
        self.clusters.insert(id, Cluster { atom, size: 1 });
        id
    }

    fn alloc_id(&mut self) -> ClusterId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Verifies partition bookkeeping for a sweep state: every assignment
    /// points at an occupied cluster, per-cluster sizes match assignment
    /// counts, and no cluster is empty.
    pub fn check_consistency(&self) -> Result<()> {
        let mut counts: BTreeMap<ClusterId, usize> = BTreeMap::new();
        for (county, id) in self.assignment.iter().enumerate() {
            if !self.clusters.contains_key(id) {
                return Err(Error::DomainError(format!(
                    "county {county} assigned to missing cluster {id}"
                )));
            }
            *counts.entry(*id).or_insert(0) += 1;
        }
        for (id, cluster) in &self.clusters {
            let counted = counts.get(id).copied().unwrap_or(0);
            if cluster.size != counted {
                return Err(Error::DomainError(format!(
                    "cluster {id} records size {} but {counted} counties point at it",
                    cluster.size
                )));
            }
            if cluster.size == 0 {
                return Err(Error::DomainError(format!("cluster {id} is empty")));
            }
        }
        Ok(())
    }
}

/// Current base measure G_ν = N(μ; m, B) × W[Σ⁻¹; s_df, (s_df·S)⁻¹], with
/// the factors needed to draw from it cached.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure<T: Scalar> {
    m: DVector<T>,
    b_cov: DMatrix<T>,
    s_scale: DMatrix<T>,
    s_df: T,
    b_chol: DMatrix<T>,
    b_inv: DMatrix<T>,
    sigma_scale_chol: DMatrix<T>,
}

impl<T: Scalar> BaseMeasure<T> {
    pub fn new(m: DVector<T>, b_cov: DMatrix<T>, s_scale: DMatrix<T>, s_df: T) -> Result<Self> {
        let d = m.len();
        if b_cov.nrows() != d || s_scale.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: b_cov.nrows() });
        }
        let b_chol = chol_with_jitter(&b_cov)?;
        let b_inv =
            symmetric_part(&Cholesky::<T, Dyn>::pack_dirty(b_chol.clone()).inverse());
        let s_scaled = s_scale.scale(s_df);
        let s_scaled_chol = chol_with_jitter(&s_scaled)?;
        let s_scaled_inv =
            symmetric_part(&Cholesky::<T, Dyn>::pack_dirty(s_scaled_chol).inverse());
        let sigma_scale_chol = chol_with_jitter(&s_scaled_inv)?;
        Ok(Self { m, b_cov, s_scale, s_df, b_chol, b_inv, sigma_scale_chol })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &DVector<T> {
        &self.m
    }

    pub fn b_cov(&self) -> &DMatrix<T> {
        &self.b_cov
    }

    pub fn s_scale(&self) -> &DMatrix<T> {
        &self.s_scale
    }

    pub fn s_df(&self) -> T {
        self.s_df
    }

    /// B⁻¹, used by the conjugate updates for m and the cluster means.
    pub fn b_inv(&self) -> &DMatrix<T> {
        &self.b_inv
    }

    /// Lower factor of B.
    pub fn b_chol(&self) -> &DMatrix<T> {
        &self.b_chol
    }

    /// One (μ, Σ) draw from the base measure.
    pub fn draw_atom<R: Rng>(&self, rng: &mut R) -> Result<Atom<T>> {
        let mu = sample_mvn(&self.m, &self.b_chol, rng);
        let precision = sample_wishart_chol(self.s_df, &self.sigma_scale_chol, rng)?;
        Atom::from_precision(mu, precision)
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T: Scalar> {
    /// Regression coefficients (length p).
    pub b: DVector<T>,
    /// County random effects, one length-D vector per county index.
    pub beta: Vec<DVector<T>>,
    /// Stratum effects by stratum index.
    pub nu: Vec<T>,
    /// Stratum-effect variances δ²_m by mega-stratum index.
    pub delta_sq: Vec<T>,
    /// County partition and cluster atoms.
    pub clusters: ClusterState<T>,
    /// Current base-measure parameters (m, B, S).
    pub base: BaseMeasure<T>,
    /// DP total-mass parameter.
    pub alpha: T,
}

impl<T: Scalar> ModelState<T> {
    /// Checks dimensions and support constraints against the given sizes.
    pub fn validate(&self, i: usize, s: usize, m: usize, d: usize, p: usize) -> Result<()> {
        if self.b.len() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: self.b.len() });
        }
        if self.beta.len() != i {
            return Err(Error::DimensionMismatch { expected: i, actual: self.beta.len() });
        }
        if self.beta.iter().any(|v| v.len() != d) {
            return Err(Error::DomainError("beta vector with wrong domain dimension".into()));
        }
        if self.nu.len() != s {
            return Err(Error::DimensionMismatch { expected: s, actual: self.nu.len() });
        }
        if self.delta_sq.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: self.delta_sq.len() });
        }
        if self.delta_sq.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::DomainError("delta_sq must be positive".into()));
        }
        if !(self.alpha > T::zero()) {
            return Err(Error::DomainError("alpha must be positive".into()));
        }
        if self.base.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: self.base.dim() });
        }
        if self.clusters.n_counties() != i {
            return Err(Error::DimensionMismatch { expected: i, actual: self.clusters.n_counties() });
        }
        self.clusters.check_consistency()
    }
}
