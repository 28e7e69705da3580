//! Property tests for the numeric kernels and the dataset wire format.

use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;

use sae_core::approx::GaussianFactor;
use sae_core::data::{CellRow, Dataset};
use sae_core::kernels::{expit, ln1p_exp, logit, SpdMatrix};
use sae_core::sampler::{mh_log_ratio, quantile_sorted};

fn spd_from_entries(d: usize, entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_iterator(d, d, entries.iter().copied());
    &m * m.transpose() + DMatrix::identity(d, d) * 0.05
}

proptest! {
    #[test]
    fn cholesky_reconstructs_the_matrix(
        d in 1usize..5,
        entries in vec(-3.0f64..3.0, 16),
    ) {
        let a = spd_from_entries(d, &entries[..d * d]);
        let spd = SpdMatrix::new(a.clone()).unwrap();
        let l = spd.chol_lower();
        let back = l * l.transpose();
        let scale = a.abs().max().max(1.0);
        prop_assert!((&back - &a).abs().max() <= 1e-10 * scale);
    }

    #[test]
    fn spd_inverse_multiplies_to_identity(
        d in 1usize..5,
        entries in vec(-2.0f64..2.0, 16),
    ) {
        let a = spd_from_entries(d, &entries[..d * d]);
        let spd = SpdMatrix::new(a.clone()).unwrap();
        let prod = &a * spd.inverse();
        let err = (&prod - DMatrix::identity(d, d)).abs().max();
        prop_assert!(err <= 1e-8, "|A A^-1 - I| = {err}");
    }

    #[test]
    fn logit_inverts_expit(x in -12.0f64..12.0) {
        // Beyond |x| ~ 12 the round trip loses digits to 1 - p cancellation,
        // a property of f64, not of the implementation.
        let p: f64 = expit(x);
        prop_assert!(p > 0.0 && p < 1.0);
        let back = logit(p).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn expit_is_monotone_and_bounded(x in -700.0f64..700.0, h in 0.1f64..5.0) {
        // The open interval only holds up to |x| ~ 36; beyond that f64
        // rounds 1 + e^-x to 1 and the tail saturates.
        let p: f64 = expit(x);
        prop_assert!((0.0..=1.0).contains(&p));
        if x.abs() < 36.0 {
            prop_assert!(p > 0.0 && p < 1.0);
        }
        prop_assert!(expit(x + h) >= p);
    }

    #[test]
    fn ln1p_exp_is_accurate_and_ordered(z in -700.0f64..700.0) {
        let v: f64 = ln1p_exp(z);
        // Exact value via the stable branch opposite the one under test.
        let reference = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        prop_assert!((v - reference).abs() <= 1e-12 * reference.abs().max(1.0));
        prop_assert!(v >= z.max(0.0));
    }

    #[test]
    fn quantiles_are_monotone_and_bounded(
        mut xs in vec(-1e6f64..1e6, 1..60),
        qs in vec(0.0f64..=1.0, 2..8),
    ) {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut qs = qs;
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let values: Vec<f64> = qs.iter().map(|&q| quantile_sorted(&xs, q)).collect();
        for w in values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(*values.first().unwrap() >= xs[0]);
        prop_assert!(*values.last().unwrap() <= *xs.last().unwrap());
    }

    #[test]
    fn mh_log_ratio_is_antisymmetric(
        d in 1usize..4,
        entries in vec(-2.0f64..2.0, 9),
        mean in vec(-3.0f64..3.0, 3),
        xs in vec(-4.0f64..4.0, 3),
        ys in vec(-4.0f64..4.0, 3),
        ll in vec(-50.0f64..0.0, 2),
    ) {
        let cov = SpdMatrix::new(spd_from_entries(d, &entries[..d * d])).unwrap();
        let factor = GaussianFactor::from_moments(&DVector::from_row_slice(&mean[..d]), &cov);
        let x = DVector::from_row_slice(&xs[..d]);
        let y = DVector::from_row_slice(&ys[..d]);
        let forward: f64 = mh_log_ratio(&factor, &x, &y, ll[0], ll[1]);
        let backward: f64 = mh_log_ratio(&factor, &y, &x, ll[1], ll[0]);
        prop_assert!((forward + backward).abs() <= 1e-9 * forward.abs().max(1.0));
    }
}

/// Rows for `counties` counties with randomized sparse domains and a valid
/// nesting: stratum = county % strata, mega = stratum % megas, state id from
/// the per-county list.
fn row_table(
    counties: usize,
    strata: usize,
    megas: usize,
    domain_mask: &[u8],
    states: &[u8],
    counts: &[(u64, u64)],
    covs: &[f64],
) -> Vec<CellRow<f64>> {
    let n_domains = 3usize;
    let mut rows = Vec::new();
    let mut cell = 0usize;
    for c in 0..counties {
        let stratum = c % strata;
        for d in 0..n_domains {
            // Every county keeps domain 0 so no county is empty.
            if d > 0 && domain_mask[c * n_domains + d] == 0 {
                continue;
            }
            let (y_raw, extra) = counts[cell % counts.len()];
            let n = y_raw + extra;
            rows.push(CellRow {
                county_id: 100 + c as u64,
                stratum_id: 10 + stratum as u64,
                mega_stratum_id: 1 + (stratum % megas) as u64,
                state_id: 1 + u64::from(states[c]),
                domain_id: d + 1,
                y: y_raw,
                n,
                n_pop: n + 40,
                x: vec![covs[cell % covs.len()], covs[(cell + 7) % covs.len()]],
            });
            cell += 1;
        }
    }
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn dataset_survives_a_csv_round_trip(
        counties in 1usize..8,
        strata in 1usize..4,
        megas in 1usize..3,
        domain_mask in vec(0u8..2, 24),
        states in vec(0u8..4, 8),
        counts in vec((0u64..30, 0u64..20), 6),
        covs in vec(-1e4f64..1e4, 9),
    ) {
        let strata = strata.min(counties);
        let rows = row_table(counties, strata, megas, &domain_mask, &states, &counts, &covs);
        let data = Dataset::from_rows(&rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        sae_core::io::write_dataset(&path, &data).unwrap();
        let back: Dataset<f64> = sae_core::io::read_dataset(&path).unwrap();
        prop_assert_eq!(&back, &data);
    }
}
