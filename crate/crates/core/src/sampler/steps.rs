//! The individual conditional updates that make up one sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::approx::{combine_normals, likelihood_factor, GaussianFactor, NormalApprox};
use crate::error::{Error, Result};
use crate::kernels::{sample_wishart_chol, RngStream, SpdMatrix};
use crate::likelihood::{b_view, beta_view, nu_view, BlockView};
use crate::scalar::Scalar;
use crate::state::{Atom, BaseMeasure, ClusterId};

use super::{mh, BlockOutcome, Mutation, Sampler};

/// Independence-MH update of one block given its likelihood view, an
/// already-computed likelihood factor, and the block's conditional prior.
/// Returns the new value and whether the proposal was accepted.
fn mh_update<T: Scalar, R: Rng>(
    view: &BlockView<T>,
    current: &DVector<T>,
    like_factor: &GaussianFactor<T>,
    prior: &GaussianFactor<T>,
    wrong_density: bool,
    rng: &mut R,
) -> Result<(DVector<T>, bool)> {
    let proposal_dist = combine_normals(prior, like_factor)?;
    let proposal = proposal_dist.sample(rng);
    let ll_current = view.loglik(current);
    let ll_proposal = view.loglik(&proposal);
    let accepted = if wrong_density {
        // Deliberate defect: evaluating the ratio at the proposal density
        // instead of the likelihood approximation drops the prior from the
        // stationary distribution.
        let combined = prior.add(like_factor)?;
        mh::mh_accept_independence(&combined, current, &proposal, ll_current, ll_proposal, rng)
    } else {
        mh::mh_accept_independence(like_factor, current, &proposal, ll_current, ll_proposal, rng)
    };
    if accepted {
        Ok((proposal, true))
    } else {
        Ok((current.clone(), false))
    }
}

/// Draws one index from unnormalized log weights.
fn sample_categorical_log<T: Scalar, R: Rng>(log_weights: &[T], rng: &mut R) -> usize {
    debug_assert!(!log_weights.is_empty());
    let max = log_weights
        .iter()
        .copied()
        .fold(log_weights[0], |a, b| if b > a { b } else { a });
    let total: T = log_weights.iter().map(|w| (*w - max).exp()).sum();
    let target = T::uniform_open01(rng) * total;
    let mut acc = T::zero();
    for (i, w) in log_weights.iter().enumerate() {
        acc += (*w - max).exp();
        if target <= acc {
            return i;
        }
    }
    log_weights.len() - 1
}

impl<'d, T: Scalar> Sampler<'d, T> {
    fn wrong_density(&self) -> bool {
        self.mutation == Mutation::WrongMhDensity
    }

    /// (i) Regression coefficients: independence MH against the full-data
    /// logistic likelihood. With a flat prior the likelihood information
    /// must be invertible; a dataset with no trials cannot identify the
    /// coefficients and surfaces `SingularInformation`.
    pub fn step_b(&mut self, stream: &RngStream) -> Result<BlockOutcome> {
        let mut rng = stream.rng();
        let view = b_view(&self.state, self.data);
        match likelihood_factor(&view, &self.state.b) {
            Ok(factor) => {
                let (value, accepted) = mh_update(
                    &view,
                    &self.state.b,
                    &factor,
                    &self.hypers.b_prior,
                    self.wrong_density(),
                    &mut rng,
                )?;
                self.state.b = value;
                Ok(if accepted { BlockOutcome::Accepted } else { BlockOutcome::Rejected })
            }
            Err(Error::SingularInformation) => match &self.hypers.b_prior_approx {
                Some(prior) => {
                    self.state.b = prior.sample(&mut rng);
                    Ok(BlockOutcome::PriorDraw)
                }
                None => Err(Error::SingularInformation),
            },
            Err(e) => Err(e),
        }
    }

    /// (ii) County random effects, one D-block per county, prior given by
    /// the county's cluster atom. Counties with no trials take an exact
    /// draw from the atom. Each county uses its own sub-stream, so the
    /// update is schedule-independent.
    pub fn step_beta(&mut self, stream: &RngStream) -> Result<(usize, usize)> {
        let mut accepted = 0;
        let total = self.data.n_counties();
        for county in 0..total {
            let mut rng = stream.substream(county as u64).rng();
            let atom = self.state.clusters.atom_of(county).clone();
            let view = beta_view(&self.state, self.data, county);
            match likelihood_factor(&view, &self.state.beta[county]) {
                Ok(factor) => {
                    let prior =
                        GaussianFactor::from_mean_precision(atom.mu(), atom.precision().clone());
                    let (value, acc) = mh_update(
                        &view,
                        &self.state.beta[county],
                        &factor,
                        &prior,
                        self.wrong_density(),
                        &mut rng,
                    )?;
                    self.state.beta[county] = value;
                    accepted += usize::from(acc);
                }
                Err(Error::SingularInformation) => {
                    self.state.beta[county] = atom.sample(&mut rng);
                    accepted += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok((accepted, total))
    }

    /// (iii) Stratum effects, scalar blocks with prior N(0, delta^2 of the
    /// stratum's mega-stratum). Strata with no trials take an exact prior
    /// draw. Per-stratum sub-streams.
    pub fn step_nu(&mut self, stream: &RngStream) -> Result<(usize, usize)> {
        let mut accepted = 0;
        let total = self.data.n_strata();
        for stratum in 0..total {
            let mut rng = stream.substream(stratum as u64).rng();
            let delta_sq = self.state.delta_sq[self.data.stratum(stratum).mega];
            let view = nu_view(&self.state, self.data, stratum);
            match likelihood_factor(&view, &DVector::from_element(1, self.state.nu[stratum])) {
                Ok(factor) => {
                    let prior = GaussianFactor::from_mean_precision(
                        &DVector::zeros(1),
                        DMatrix::from_element(1, 1, T::one() / delta_sq),
                    );
                    let current = DVector::from_element(1, self.state.nu[stratum]);
                    let (value, acc) = mh_update(
                        &view,
                        &current,
                        &factor,
                        &prior,
                        self.wrong_density(),
                        &mut rng,
                    )?;
                    self.state.nu[stratum] = value[0];
                    accepted += usize::from(acc);
                }
                Err(Error::SingularInformation) => {
                    self.state.nu[stratum] = delta_sq.sqrt() * T::std_normal(&mut rng);
                    accepted += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok((accepted, total))
    }

    /// (iv) Stratum-effect variances: exact Gibbs. For mega-stratum m with
    /// S_m strata, 1/delta_m^2 ~ Gamma(a_delta + S_m/2,
    /// b_delta + sum(nu_s^2)/2), rate parameterization.
    pub fn step_delta(&mut self, stream: &RngStream) -> Result<()> {
        let mut rng = stream.rng();
        let half = T::of(0.5);
        for mega in 0..self.data.n_megas() {
            let strata = self.data.mega_strata(mega);
            let shape = self.hypers.a_delta + half * T::of(strata.len() as f64);
            let sum_sq: T = strata.iter().map(|&s| self.state.nu[s] * self.state.nu[s]).sum();
            let mut rate = self.hypers.b_delta + half * sum_sq;
            if self.mutation == Mutation::WrongDeltaRate {
                rate = rate * half;
            }
            let precision = T::gamma_draw(shape, rate, &mut rng);
            self.state.delta_sq[mega] = T::one() / precision;
        }
        Ok(())
    }

    /// (v-a) Cluster assignments by auxiliary-atom Gibbs. Each county is
    /// detached; a detached singleton's atom becomes the first auxiliary,
    /// the rest are fresh base-measure draws. Existing clusters weigh in
    /// proportion to (size without this county) x density; each auxiliary
    /// weighs (alpha / m_aux) x density.
    pub fn step_clusters(&mut self, stream: &RngStream) -> Result<()> {
        let mut rng = stream.rng();
        let m_aux = self.hypers.neal_aux_m;
        for county in 0..self.data.n_counties() {
            let (_, orphan) = self.state.clusters.detach(county);
            let mut aux: Vec<Atom<T>> = Vec::with_capacity(m_aux);
            if let Some(atom) = orphan {
                aux.push(atom);
            }
            while aux.len() < m_aux {
                aux.push(self.state.base.draw_atom(&mut rng)?);
            }

            let beta = &self.state.beta[county];
            let existing: Vec<ClusterId> =
                self.state.clusters.clusters().map(|(id, _)| id).collect();
            let mut log_weights = Vec::with_capacity(existing.len() + m_aux);
            for &id in &existing {
                let cluster = self.state.clusters.cluster(id);
                log_weights
                    .push(T::of(cluster.size as f64).ln() + cluster.atom.log_density(beta));
            }
            let aux_mass = if self.mutation == Mutation::WrongAuxWeight {
                // Deliberate defect: not dividing by the number of
                // auxiliaries inflates the new-cluster probability.
                self.state.alpha
            } else {
                self.state.alpha / T::of(m_aux as f64)
            };
            let log_aux_mass = aux_mass.ln();
            for atom in &aux {
                log_weights.push(log_aux_mass + atom.log_density(beta));
            }

            let choice = sample_categorical_log(&log_weights, &mut rng);
            if choice < existing.len() {
                self.state.clusters.attach(county, existing[choice]);
            } else {
                let atom = aux.swap_remove(choice - existing.len());
                self.state.clusters.attach_new(county, atom);
            }
        }
        debug_assert!(self.state.clusters.check_consistency().is_ok());
        Ok(())
    }

    /// (v-b) Cluster atoms: exact conjugate updates given memberships.
    /// mu_j | Sigma_j is normal with precision B^{-1} + n_j Sigma_j^{-1};
    /// Sigma_j^{-1} | mu_j is Wishart with df s_df + n_j and scale
    /// (s_df S + scatter about mu_j)^{-1}.
    pub fn step_cluster_params(&mut self, stream: &RngStream) -> Result<()> {
        let mut rng = stream.rng();
        let mut members: std::collections::BTreeMap<ClusterId, Vec<usize>> = self
            .state
            .clusters
            .clusters()
            .map(|(id, _)| (id, Vec::new()))
            .collect();
        for (county, &id) in self.state.clusters.assignments().iter().enumerate() {
            members.get_mut(&id).expect("assignment to live cluster").push(county);
        }
        let s_df = self.hypers.s_df;
        let scaled_s = self.state.base.s_scale() * s_df;
        for (id, counties) in members {
            let atom = self.state.clusters.cluster(id).atom.clone();
            let n_j = T::of(counties.len() as f64);

            // Location given spread.
            let mut shift = self.state.base.b_inv() * self.state.base.m();
            let mut sum_beta = DVector::zeros(self.hypers.d);
            for &i in &counties {
                sum_beta += &self.state.beta[i];
            }
            shift += atom.precision() * &sum_beta;
            let precision = self.state.base.b_inv() + atom.precision() * n_j;
            let posterior =
                NormalApprox::from_factor(&GaussianFactor::new(precision, shift)?)?;
            let mu = posterior.sample(&mut rng);

            // Spread given the fresh location.
            let mut scale_inv = scaled_s.clone();
            for &i in &counties {
                let dev = &self.state.beta[i] - &mu;
                scale_inv += &dev * dev.transpose();
            }
            let scale = SpdMatrix::new(scale_inv)?.inverse();
            let scale_chol = SpdMatrix::new(scale)?;
            let prec = sample_wishart_chol(
                s_df + n_j,
                scale_chol.chol_lower(),
                &mut rng,
            )?;
            self.state.clusters.set_atom(id, Atom::from_precision(mu, prec)?);
        }
        Ok(())
    }

    /// (v-c) Base-measure hyperparameters, each cluster's atom counted once:
    /// the location center m (normal), the location spread B (inverse via
    /// Wishart), and the spread scale S (Wishart).
    pub fn step_base_hypers(&mut self, stream: &RngStream) -> Result<()> {
        let mut rng = stream.rng();
        let d = self.hypers.d;
        let k = self.state.clusters.k();
        let k_t = T::of(k as f64);
        let atoms: Vec<Atom<T>> = self
            .state
            .clusters
            .clusters()
            .map(|(_, c)| c.atom.clone())
            .collect();

        // Center of the atom locations.
        let mut sum_mu = DVector::zeros(d);
        for atom in &atoms {
            sum_mu += atom.mu();
        }
        let precision = &self.hypers.a_inv + self.state.base.b_inv() * k_t;
        let shift = &self.hypers.a_inv_a + self.state.base.b_inv() * sum_mu;
        let m = NormalApprox::from_factor(&GaussianFactor::new(precision, shift)?)?
            .sample(&mut rng);

        // Spread of the atom locations about the fresh center.
        let mut scatter = self.hypers.c_c.clone();
        for atom in &atoms {
            let dev = atom.mu() - &m;
            scatter += &dev * dev.transpose();
        }
        let scale = SpdMatrix::new(SpdMatrix::new(scatter)?.inverse())?;
        let b_inv = sample_wishart_chol(self.hypers.c + k_t, scale.chol_lower(), &mut rng)?;
        let b_cov = SpdMatrix::new(b_inv)?.inverse();

        // Scale of the atom spreads.
        let mut s_rate = self.hypers.r_over_q_inv.clone();
        for atom in &atoms {
            s_rate += atom.precision() * self.hypers.s_df;
        }
        let s_scale = SpdMatrix::new(SpdMatrix::new(s_rate)?.inverse())?;
        let s = sample_wishart_chol(
            self.hypers.q + k_t * self.hypers.s_df,
            s_scale.chol_lower(),
            &mut rng,
        )?;

        self.state.base = BaseMeasure::new(m, b_cov, s, self.hypers.s_df)?;
        Ok(())
    }

    /// (v-d) Total mass, by the beta-auxiliary two-gamma mixture. With k
    /// clusters among I counties: draw eta ~ Beta(alpha + 1, I), then alpha
    /// from Gamma(a_alpha + k, b_alpha - ln eta) with probability
    /// odds/(1 + odds), odds = (a_alpha + k - 1)/(I (b_alpha - ln eta)),
    /// otherwise from Gamma(a_alpha + k - 1, same rate).
    pub fn step_alpha(&mut self, stream: &RngStream) -> Result<()> {
        let mut rng = stream.rng();
        let i_t = T::of(self.data.n_counties() as f64);
        let k_t = T::of(self.state.clusters.k() as f64);
        let eta = T::beta_draw(self.state.alpha + T::one(), i_t, &mut rng);
        let rate = self.hypers.b_alpha - eta.ln();
        let shape_hi = self.hypers.a_alpha + k_t;
        let odds = (shape_hi - T::one()) / (i_t * rate);
        let shape = if T::uniform_open01(&mut rng) < odds / (T::one() + odds) {
            shape_hi
        } else {
            shape_hi - T::one()
        };
        self.state.alpha = T::gamma_draw(shape, rate, &mut rng);
        Ok(())
    }
}
