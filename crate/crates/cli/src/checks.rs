//! Sampler correctness checks behind the `check` subcommand.
//!
//! Three oracles exercise isolated kernels against independently coded
//! references, then a joint-distribution test compares prior draws with
//! sweep-and-resimulate draws over the full model. Any failure here is a
//! correctness bug, not a tuning problem. An injected fault (`--mutation`)
//! must make the run fail; that is how the checks themselves are validated.

use anyhow::{bail, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Gamma};

use sae_core::approx::GaussianFactor;
use sae_core::geweke::{conservative_config, geweke_check, template_dataset, GewekeSizes};
use sae_core::kernels::{RngStream, SpdMatrix};
use sae_core::predict::polya_urn_extend;
use sae_core::sampler::{mh_log_ratio, ChainMode, Mutation, Sampler};
use sae_core::state::{Atom, BaseMeasure, ClusterState};
use sae_core::{Dataset, HyperConfig, Scalar};

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(detail: String) -> Outcome {
    Outcome { pass: true, detail }
}

fn fail(detail: String) -> Outcome {
    Outcome { pass: false, detail }
}

/// Runs every check, prints one line per check, and errors if any failed.
pub fn run(seed: u64, samples: usize, threshold: f64, mutation: Mutation) -> Result<()> {
    println!("sae check (seed {seed})");
    if mutation != Mutation::None {
        println!("  injected fault: {mutation:?}");
    }
    let mut table = None;
    let checks: Vec<(&str, Outcome)> = vec![
        ("acceptance ratio", acceptance_ratio_check(seed)),
        ("urn partition", urn_frequency_check(seed)),
        ("stratum variance", stratum_variance_check(seed, mutation)),
        (
            "joint distribution",
            joint_distribution_check(seed, samples, threshold, mutation, &mut table),
        ),
    ];
    let mut failures = 0;
    for (name, outcome) in &checks {
        let verdict = if outcome.pass { "ok  " } else { "FAIL" };
        println!("  {name:<20} {verdict}  {}", outcome.detail);
        if !outcome.pass {
            failures += 1;
        }
    }
    if let Some(table) = table {
        println!("{table}");
    }
    if failures > 0 {
        bail!("{failures} of {} sampler checks failed", checks.len());
    }
    Ok(())
}

/// The accept ratio must equal the likelihood ratio times the proposal-normal
/// density ratio, recomputed here from scratch with nalgebra's Cholesky.
fn acceptance_ratio_check(seed: u64) -> Outcome {
    let stream = RngStream::new(seed, 11);
    let mut worst = 0.0f64;
    for t in 0..400u64 {
        let d = if t % 2 == 0 { 1 } else { 6 };
        let mut rng = stream.substream(t).rng();
        let root = DMatrix::<f64>::from_fn(d, d, |_, _| f64::std_normal(&mut rng));
        let cov = &root * root.transpose() + DMatrix::identity(d, d) * 0.2;
        let mean = DVector::from_fn(d, |_, _| f64::std_normal(&mut rng));
        let x = DVector::from_fn(d, |_, _| 2.0 * f64::std_normal(&mut rng));
        let y = DVector::from_fn(d, |_, _| 2.0 * f64::std_normal(&mut rng));
        let ll_x = -30.0 * f64::uniform_open01(&mut rng);
        let ll_y = -30.0 * f64::uniform_open01(&mut rng);

        let spd = match SpdMatrix::new(cov.clone()) {
            Ok(s) => s,
            Err(e) => return fail(format!("covariance rejected: {e}")),
        };
        let got = mh_log_ratio(&GaussianFactor::from_moments(&mean, &spd), &x, &y, ll_x, ll_y);

        let chol = Cholesky::new(cov).expect("positive definite by construction");
        let log_pdf = |v: &DVector<f64>| {
            let w = chol.l().solve_lower_triangular(&(v - &mean)).expect("nonzero diagonal");
            let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|l| l.ln()).sum::<f64>();
            -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + w.dot(&w))
        };
        let want = (ll_y - ll_x) + log_pdf(&x) - log_pdf(&y);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    let detail = format!("max relative error {worst:.1e} over 400 instances");
    if worst <= 1e-12 {
        ok(detail)
    } else {
        fail(detail)
    }
}

/// Urn extension of a single county with alpha = 1 partitions three counties
/// with P(one cluster) = 1/3 and P(three clusters) = 1/6.
fn urn_frequency_check(seed: u64) -> Outcome {
    let atom = match Atom::new(DVector::zeros(1), DMatrix::identity(1, 1)) {
        Ok(a) => a,
        Err(e) => return fail(format!("atom construction failed: {e}")),
    };
    let base = match BaseMeasure::new(
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        3.0,
    ) {
        Ok(b) => b,
        Err(e) => return fail(format!("base measure construction failed: {e}")),
    };
    let stream = RngStream::new(seed, 12);
    let reps = 20_000usize;
    let (mut ones, mut threes) = (0usize, 0usize);
    for rep in 0..reps {
        let mut clusters = ClusterState::single_cluster(1, atom.clone());
        let mut rng = stream.substream(rep as u64).rng();
        for _ in 0..2 {
            if let Err(e) = polya_urn_extend(&mut clusters, 1.0, &base, &mut rng) {
                return fail(format!("urn draw failed: {e}"));
            }
        }
        match clusters.k() {
            1 => ones += 1,
            3 => threes += 1,
            _ => {}
        }
    }
    let p1 = ones as f64 / reps as f64;
    let p3 = threes as f64 / reps as f64;
    let (t1, t3) = (1.0 / 3.0, 1.0 / 6.0);
    let se1 = (t1 * (1.0 - t1) / reps as f64).sqrt();
    let se3 = (t3 * (1.0 - t3) / reps as f64).sqrt();
    let detail = format!("P(k=1) = {p1:.4} (want 1/3), P(k=3) = {p3:.4} (want 1/6), n = {reps}");
    if (p1 - t1).abs() <= 4.0 * se1 && (p3 - t3).abs() <= 4.0 * se3 {
        ok(detail)
    } else {
        fail(detail)
    }
}

/// At fixed stratum effects the variance update is conjugate: the drawn
/// precision is Gamma(a + S/2, b + sum(nu^2)/2). Kolmogorov-Smirnov against
/// that law catches wrong shapes or rates.
fn stratum_variance_check(seed: u64, mutation: Mutation) -> Outcome {
    let sizes = GewekeSizes { counties: 4, strata: 4, megas: 1, domains: 2, cell_n: 5 };
    let data: Dataset = match template_dataset(&sizes) {
        Ok(d) => d,
        Err(e) => return fail(format!("template dataset failed: {e}")),
    };
    let config: HyperConfig = HyperConfig::defaults(2, 2, seed);
    let mut sampler = match Sampler::new(&data, &config, ChainMode::Mixture, mutation) {
        Ok(s) => s,
        Err(e) => return fail(format!("sampler construction failed: {e}")),
    };
    let nu = [0.3, -0.5, 0.8, 0.1];
    sampler.state.nu = nu.to_vec();
    let shape = config.a_delta + nu.len() as f64 / 2.0;
    let rate = config.b_delta + 0.5 * nu.iter().map(|v| v * v).sum::<f64>();

    let stream = RngStream::new(seed, 13);
    let n = 4000usize;
    let mut precisions = Vec::with_capacity(n);
    for t in 0..n {
        if let Err(e) = sampler.step_delta(&stream.substream(t as u64)) {
            return fail(format!("variance update failed: {e}"));
        }
        precisions.push(1.0 / sampler.state.delta_sq[0]);
    }
    precisions.sort_by(|a, b| a.partial_cmp(b).expect("finite precisions"));
    let gamma = Gamma::new(shape, rate).expect("positive shape and rate");
    let mut d_stat = 0.0f64;
    for (i, x) in precisions.iter().enumerate() {
        let f = gamma.cdf(*x);
        d_stat = d_stat.max((f - i as f64 / n as f64).abs());
        d_stat = d_stat.max((f - (i + 1) as f64 / n as f64).abs());
    }
    let p = kolmogorov_p(n, d_stat);
    let detail = format!("KS p = {p:.3} (D = {d_stat:.4}, n = {n})");
    if p > 0.01 {
        ok(detail)
    } else {
        fail(detail)
    }
}

/// Prior draws versus sweep-and-resimulate draws over the whole model; any
/// transition-kernel error shows up as a shifted moment.
fn joint_distribution_check(
    seed: u64,
    samples: usize,
    threshold: f64,
    mutation: Mutation,
    table: &mut Option<String>,
) -> Outcome {
    let config = conservative_config::<f64>(2, seed);
    let sizes = GewekeSizes::default();
    let stream = RngStream::new(seed, 14);
    match geweke_check(&config, &sizes, samples, samples, mutation, &stream) {
        Ok(result) => {
            *table = Some(format!("{result}"));
            let detail =
                format!("max |z| = {:.2} (threshold {threshold}, {samples} draws per chain)", result.max_abs_z());
            if result.passes(threshold) {
                ok(detail)
            } else {
                fail(detail)
            }
        }
        Err(e) => fail(format!("failed to run: {e}")),
    }
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
fn kolmogorov_p(n: usize, d: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut sum = 0.0;
    for j in 1..=100 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
