use super::*;
use crate::data::CellRow;
use crate::error::Error;
use crate::kernels::RngStream;

/// 4 counties in 2 strata under 1 mega-stratum, 2 states, 2 domains, p = 2.
fn tiny_rows(n: u64) -> Vec<CellRow<f64>> {
    let mut rows = Vec::new();
    for county in 0..4u64 {
        for domain in 1..=2usize {
            rows.push(CellRow {
                county_id: county + 1,
                stratum_id: county / 2 + 1,
                mega_stratum_id: 1,
                state_id: county % 2 + 1,
                domain_id: domain,
                y: if n == 0 { 0 } else { 3 + county + domain as u64 },
                n,
                n_pop: 500,
                x: vec![1.0, if domain == 1 { 0.0 } else { 1.0 }],
            });
        }
    }
    rows
}

fn tiny_dataset() -> Dataset<f64> {
    Dataset::from_rows(&tiny_rows(20)).unwrap()
}

fn tiny_config(seed: u64) -> HyperConfig<f64> {
    let mut cfg = HyperConfig::defaults(2, 2, seed);
    cfg.iterations = 30;
    cfg.burn_in = 10;
    cfg
}

#[test]
fn initial_state_is_deterministic_and_valid() {
    let data = tiny_dataset();
    let cfg = tiny_config(5);
    let s1 = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    let s2 = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    assert_eq!(s1.state, s2.state);
    s1.state.validate(4, 2, 1, 2, 2).unwrap();
    // mixture chains start fully split and coalesce
    assert_eq!(s1.state.clusters.k(), 4);
    assert_eq!(s1.state.alpha, cfg.a_alpha / cfg.b_alpha);
    assert_eq!(s1.state.delta_sq[0], cfg.b_delta / cfg.a_delta);

    let single = Sampler::new(&data, &cfg, ChainMode::SingleCluster, Mutation::None).unwrap();
    assert_eq!(single.state.clusters.k(), 1);
}

#[test]
fn flat_prior_initializes_near_likelihood_mode() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(5);
    cfg.v_b_inv = vec![vec![0.0; 2]; 2];
    let s = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    // pooled leave-domain-2 rate: domain 1 cells have y = 4..7 of n = 20 each
    let pooled1 = (4.0 + 5.0 + 6.0 + 7.0) / 80.0f64;
    let pooled2 = (5.0 + 6.0 + 7.0 + 8.0) / 80.0f64;
    let logit = |p: f64| (p / (1.0 - p)).ln();
    assert!((s.state.b[0] - logit(pooled1)).abs() < 0.05);
    assert!((s.state.b[0] + s.state.b[1] - logit(pooled2)).abs() < 0.05);
}

#[test]
fn delta_step_matches_conjugate_gamma() {
    // With nu = 0, a_delta = b_delta = 1, and 2 strata in the mega-stratum,
    // the precision conditional is Gamma(shape 2, rate 1): mean 2, var 2.
    let data = tiny_dataset();
    let mut cfg = tiny_config(0);
    cfg.a_delta = 1.0;
    cfg.b_delta = 1.0;
    let mut sampler = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    let stream = RngStream::new(42, 9);
    let n = 40_000usize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for t in 0..n {
        sampler.state.nu = vec![0.0, 0.0];
        sampler.step_delta(&stream.substream(t as u64)).unwrap();
        let prec = 1.0 / sampler.state.delta_sq[0];
        sum += prec;
        sum_sq += prec * prec;
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    let se_mean = (2.0 / n as f64).sqrt();
    assert!((mean - 2.0).abs() < 4.0 * se_mean, "mean {mean}");
    assert!((var - 2.0).abs() < 0.2, "var {var}");
}

#[test]
fn delta_step_uses_nu_in_the_rate() {
    // With nu fixed at (2, 0) and a_delta = b_delta = 1, the rate is
    // 1 + 2 = 3, so the precision mean is 2/3.
    let data = tiny_dataset();
    let mut cfg = tiny_config(0);
    cfg.a_delta = 1.0;
    cfg.b_delta = 1.0;
    let mut sampler = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    let stream = RngStream::new(43, 9);
    let n = 40_000usize;
    let mut sum = 0.0;
    for t in 0..n {
        sampler.state.nu = vec![2.0, 0.0];
        sampler.step_delta(&stream.substream(t as u64)).unwrap();
        sum += 1.0 / sampler.state.delta_sq[0];
    }
    let mean = sum / n as f64;
    let se = (2.0 / 9.0 / n as f64).sqrt();
    assert!((mean - 2.0 / 3.0).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn zero_information_falls_back_to_prior_draws() {
    let data = Dataset::from_rows(&tiny_rows(0)).unwrap();
    let mut cfg = tiny_config(1);
    cfg.v_b_inv = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let mut sampler = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();

    let stream = RngStream::new(7, 3);
    let n = 20_000usize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for t in 0..n {
        let outcome = sampler.step_b(&stream.substream(t as u64)).unwrap();
        assert_eq!(outcome, BlockOutcome::PriorDraw);
        sum += sampler.state.b[0];
        sum_sq += sampler.state.b[0] * sampler.state.b[0];
    }
    // b ~ N(0, I) under the prior
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "var {var}");

    // county and stratum blocks likewise take exact conditional-prior draws
    let (acc, total) = sampler.step_beta(&stream.substream(u64::MAX)).unwrap();
    assert_eq!((acc, total), (4, 4));
    let (acc, total) = sampler.step_nu(&stream.substream(u64::MAX - 1)).unwrap();
    assert_eq!((acc, total), (2, 2));
}

#[test]
fn zero_information_with_flat_prior_is_an_error() {
    let data = Dataset::from_rows(&tiny_rows(0)).unwrap();
    let mut cfg = tiny_config(1);
    cfg.v_b_inv = vec![vec![0.0; 2]; 2];
    let mut sampler = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    assert!(matches!(
        sampler.step_b(&RngStream::new(7, 3)),
        Err(Error::SingularInformation)
    ));
}

#[test]
fn single_cluster_mode_never_splits() {
    let data = tiny_dataset();
    let out = run_parametric_chain(&data, &tiny_config(11)).unwrap();
    assert_eq!(out.mode, ChainMode::SingleCluster);
    for draw in &out.draws {
        assert_eq!(draw.k(), 1);
        let first = draw.state.clusters.assignment(0);
        assert!((0..4).all(|i| draw.state.clusters.assignment(i) == first));
    }
}

#[test]
fn mixture_chain_moves_through_partitions() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(13);
    cfg.iterations = 300;
    cfg.burn_in = 0;
    let out = run_chain(&data, &cfg).unwrap();
    let ks: std::collections::BTreeSet<usize> = out.draws.iter().map(|d| d.k()).collect();
    assert!(ks.len() > 1, "chain never changed k: {ks:?}");
    for draw in &out.draws {
        draw.state.validate(4, 2, 1, 2, 2).unwrap();
    }
}

#[test]
fn chains_are_reproducible_and_seed_sensitive() {
    let data = tiny_dataset();
    let cfg = tiny_config(21);
    let a = run_chain(&data, &cfg).unwrap();
    let b = run_chain(&data, &cfg).unwrap();
    assert_eq!(a, b);

    let mut other = cfg.clone();
    other.seed = 22;
    let c = run_chain(&data, &other).unwrap();
    assert_ne!(a.draws.last().unwrap().state.b, c.draws.last().unwrap().state.b);
}

#[test]
fn saved_draw_schedule_matches_config() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(3);
    cfg.iterations = 11;
    cfg.burn_in = 10;
    cfg.thin = 1;
    let out = run_chain(&data, &cfg).unwrap();
    assert_eq!(out.draws.len(), 1);
    assert_eq!(out.draws[0].iteration, 10);

    cfg.iterations = 20;
    cfg.burn_in = 10;
    cfg.thin = 3;
    let out = run_chain(&data, &cfg).unwrap();
    assert_eq!(out.draws.len(), 4);
    let iters: Vec<usize> = out.draws.iter().map(|d| d.iteration).collect();
    assert_eq!(iters, vec![10, 13, 16, 19]);
}

#[test]
fn sweep_reports_are_sane() {
    let data = tiny_dataset();
    let cfg = tiny_config(17);
    let mut sampler = Sampler::new(&data, &cfg, ChainMode::Mixture, Mutation::None).unwrap();
    let stream = RngStream::new(cfg.seed, 0);
    let mut accepted_any = false;
    for t in 0..50 {
        let report = sampler.sweep(&stream.substream(t + 1)).unwrap();
        assert!(report.beta_rate() >= 0.0 && report.beta_rate() <= 1.0);
        assert!(report.nu_rate() >= 0.0 && report.nu_rate() <= 1.0);
        assert!(report.k >= 1 && report.k <= 4);
        assert!(report.alpha > 0.0);
        assert!(report.loglik.is_finite() && report.loglik < 0.0);
        accepted_any |= report.b_outcome.accepted();
        sampler.state.clusters.check_consistency().unwrap();
        assert_eq!(sampler.state.clusters.total_mass(), 4);
    }
    assert!(accepted_any, "independence proposals never accepted in 50 sweeps");
}

#[test]
fn acceptance_summary_averages_rates() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(29);
    cfg.iterations = 40;
    cfg.burn_in = 5;
    let out = run_chain(&data, &cfg).unwrap();
    assert_eq!(out.acceptance.sweeps, 40);
    for rate in [out.acceptance.b_rate, out.acceptance.beta_rate, out.acceptance.nu_rate] {
        assert!((0.0..=1.0).contains(&rate), "rate {rate} out of range");
    }
    // well-matched proposals on mild data should mostly be accepted
    assert!(out.acceptance.beta_rate > 0.5, "beta rate {}", out.acceptance.beta_rate);
}

#[test]
fn quantiles_interpolate() {
    let xs = [1.0f64, 2.0, 3.0, 4.0];
    assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
    assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
    assert_eq!(quantile_sorted(&xs, 0.5), 2.5);
    assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-12);
}

#[test]
fn chain_output_summaries_are_consistent() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(31);
    cfg.iterations = 60;
    cfg.burn_in = 20;
    let out = run_chain(&data, &cfg).unwrap();
    let post = out.k_posterior();
    let total: f64 = post.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(post.iter().any(|&(k, _)| k == out.k_mode()));
    let (lo, hi) = out.b_interval(0, 0.9);
    assert!(lo <= hi);
    let mean = out.mean_b();
    assert!(lo <= mean[0] && mean[0] <= hi || (mean[0] - lo).abs() < 1.0);
}

#[test]
fn mutated_aux_weights_inflate_cluster_count() {
    // With the auxiliary mass not divided by m, new clusters are proposed
    // three times too often; the average k must rise.
    let data = tiny_dataset();
    let mut cfg = tiny_config(37);
    cfg.iterations = 400;
    cfg.burn_in = 50;
    let stream = RngStream::new(cfg.seed, 0);
    let clean = run_chain_with(&data, &cfg, &stream, ChainMode::Mixture, Mutation::None).unwrap();
    let broken =
        run_chain_with(&data, &cfg, &stream, ChainMode::Mixture, Mutation::WrongAuxWeight)
            .unwrap();
    let mean_k = |out: &ChainOutput<f64>| {
        out.draws.iter().map(|d| d.k() as f64).sum::<f64>() / out.draws.len() as f64
    };
    assert!(
        mean_k(&broken) > mean_k(&clean) + 0.2,
        "clean {} broken {}",
        mean_k(&clean),
        mean_k(&broken)
    );
}

#[test]
fn mutated_delta_rate_shifts_variances() {
    let data = tiny_dataset();
    let mut cfg = tiny_config(41);
    cfg.iterations = 400;
    cfg.burn_in = 50;
    let stream = RngStream::new(cfg.seed, 0);
    let clean = run_chain_with(&data, &cfg, &stream, ChainMode::Mixture, Mutation::None).unwrap();
    let broken =
        run_chain_with(&data, &cfg, &stream, ChainMode::Mixture, Mutation::WrongDeltaRate)
            .unwrap();
    let mean_delta = |out: &ChainOutput<f64>| {
        out.draws.iter().map(|d| d.state.delta_sq[0]).sum::<f64>() / out.draws.len() as f64
    };
    // halving the rate halves the conditional mean of the precision
    assert!(mean_delta(&broken) < mean_delta(&clean), "mutation did not lower delta_sq");
}
