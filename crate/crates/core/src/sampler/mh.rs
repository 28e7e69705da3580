//! Independence-chain Metropolis–Hastings acceptance.

use nalgebra::DVector;
use rand::Rng;

use crate::approx::GaussianFactor;
use crate::scalar::Scalar;

/// Log acceptance ratio for an independence proposal.
///
/// The proposal is drawn from the prior × likelihood-approximation normal,
/// so the prior density cancels from the Hastings ratio and what remains is
/// the exact likelihood ratio times the likelihood-approximation density
/// ratio evaluated the opposite way around:
///
/// ```text
/// ln a = ll(proposal) − ll(current) + ln φ₁(current) − ln φ₁(proposal)
/// ```
///
/// where φ₁ is the (m₁, V₁) normal encoded by `approx`. The caller applies
/// min{0, ·}.
pub fn mh_log_ratio<T: Scalar>(
    approx: &GaussianFactor<T>,
    current: &DVector<T>,
    proposal: &DVector<T>,
    ll_current: T,
    ll_proposal: T,
) -> T {
    ll_proposal - ll_current + approx.log_density_diff(current, proposal)
}

/// Accepts with probability min{1, exp(log ratio)}.
pub fn accept_with_log_ratio<T: Scalar, R: Rng>(log_ratio: T, rng: &mut R) -> bool {
    if log_ratio >= T::zero() {
        return true;
    }
    T::uniform_open01(rng).ln() < log_ratio
}

/// Full independence-MH acceptance decision: exact acceptance probability
/// min{1, [exp(ll_prop)·φ₁(current)] / [exp(ll_cur)·φ₁(proposal)]}.
pub fn mh_accept_independence<T: Scalar, R: Rng>(
    approx: &GaussianFactor<T>,
    current: &DVector<T>,
    proposal: &DVector<T>,
    ll_current: T,
    ll_proposal: T,
    rng: &mut R,
) -> bool {
    accept_with_log_ratio(
        mh_log_ratio(approx, current, proposal, ll_current, ll_proposal),
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{likelihood_factor, GaussianFactor, NormalApprox};
    use crate::kernels::{RngStream, SpdMatrix};
    use crate::likelihood::{BlockCell, BlockView, Design};
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn identical_proposal_always_accepts() {
        let cov = SpdMatrix::new(dmatrix![1.3f64]).unwrap();
        let approx = GaussianFactor::from_moments(&dvector![0.2], &cov);
        let x = dvector![0.9];
        let lr = mh_log_ratio(&approx, &x, &x, -3.4, -3.4);
        assert_eq!(lr, 0.0);
        let mut rng = RngStream::new(1, 0).rng();
        assert!(accept_with_log_ratio(lr, &mut rng));
    }

    #[test]
    fn exact_gaussian_pseudo_likelihood_always_accepts() {
        // When the "likelihood" is itself the normal φ₁, the ratio cancels
        // analytically: ll = ln φ₁ makes ln a = 0 for every proposal.
        let cov = SpdMatrix::new(dmatrix![0.7f64, 0.2; 0.2, 0.5]).unwrap();
        let mean = dvector![0.4, -0.9];
        let factor = GaussianFactor::from_moments(&mean, &cov);
        let approx = NormalApprox::from_factor(&factor).unwrap();
        let mut rng = RngStream::new(9, 0).rng();
        for _ in 0..200 {
            let current = approx.sample(&mut rng);
            let proposal = approx.sample(&mut rng);
            let lr = mh_log_ratio(
                &factor,
                &current,
                &proposal,
                approx.log_density(&current),
                approx.log_density(&proposal),
            );
            assert!(lr.abs() < 1e-10, "ratio should cancel, got {lr}");
        }
    }

    #[test]
    fn acceptance_rate_matches_acceptance_probability() {
        // scalar logistic cell; compare the empirical acceptance frequency
        // for a fixed (current, proposal) pair against min(1, e^lr)
        let view = BlockView {
            dim: 1,
            cells: vec![BlockCell { y: 13, n: 40, offset: 0.0, design: Design::One }],
        };
        let current = dvector![0.3];
        let proposal = dvector![-0.5];
        let factor = likelihood_factor(&view, &current).unwrap();
        let lr: f64 = mh_log_ratio(
            &factor,
            &current,
            &proposal,
            view.loglik(&current),
            view.loglik(&proposal),
        );
        let a = lr.min(0.0).exp();
        let mut rng = RngStream::new(4, 0).rng();
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            if accept_with_log_ratio(lr, &mut rng) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let se = (a * (1.0 - a) / n as f64).sqrt();
        assert!((freq - a).abs() < 4.0 * se + 1e-9, "freq {freq} vs a {a}");
    }
}
