//! Plot-ready summary tables derived from a chain and its predictions:
//! state-total summaries with baseline columns, county-effect quantiles and
//! cross-domain correlations, the cluster-count posterior, stratum-effect
//! means, and the atom draws behind the mixing-distribution estimate.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{Dataset, PredictionTarget};
use crate::error::Result;
use crate::predict::{
    sample_average_estimate, state_universe, summarize_totals, synthetic_estimate, TotalDraw,
};
use crate::sampler::{quantile_sorted, ChainOutput};
use crate::scalar::Scalar;

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Pearson correlation, or 0 when either series is constant.
fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Writes every summary table into `dir`:
///
/// * `state_summary.csv` — posterior mean/sd/quantiles of each state's
///   percentage plus the synthetic and direct sample-average baselines,
/// * `beta_summary.csv` — per-county, per-domain effect quantiles,
/// * `beta_correlation.csv` — correlations of posterior-mean effects across
///   counties for each domain pair,
/// * `k_posterior.csv` — the cluster-count distribution,
/// * `nu_summary.csv` — stratum-effect posterior means,
/// * `atom_mu.csv` — per-draw cluster locations with occupancy for density
///   estimation of the mixing distribution.
pub fn export_summaries<T: Scalar>(
    dir: &Path,
    output: &ChainOutput<T>,
    data: &Dataset<T>,
    targets: &PredictionTarget<T>,
    totals: &[TotalDraw],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let d = output.sizes.domains;
    let n_draws = output.draws.len().max(1);

    let universe = state_universe(data, targets);
    let summaries = summarize_totals::<T>(totals)?;
    let synthetic = synthetic_estimate(data, targets)?;
    let sample = sample_average_estimate::<T>(data, &universe);
    let mut out = writer(dir, "state_summary.csv")?;
    writeln!(
        out,
        "state_id,n_pop,mean_pct,sd_pct,q025_pct,median_pct,q975_pct,\
         synthetic_pct,sample_pct,sample_se_pct"
    )?;
    for ((s, syn), avg) in summaries.iter().zip(&synthetic).zip(&sample) {
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.state_id,
            s.n_pop,
            s.mean_pct.as_f64(),
            s.sd_pct.as_f64(),
            s.q025_pct.as_f64(),
            s.median_pct.as_f64(),
            s.q975_pct.as_f64(),
            syn.pct.as_f64()
        )?;
        match avg.estimate {
            Some((pct, se)) => writeln!(out, ",{},{}", pct.as_f64(), se.as_f64())?,
            None => writeln!(out, ",,")?,
        }
    }
    out.flush()?;

    let mut out = writer(dir, "beta_summary.csv")?;
    writeln!(out, "county_id,domain_id,mean,q025,median,q975")?;
    for i in 0..output.sizes.counties {
        for j in 0..d {
            let mut vals: Vec<T> = output.draws.iter().map(|dr| dr.state.beta[i][j]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite effect"));
            let mean = vals.iter().copied().sum::<T>() / T::of(n_draws as f64);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                data.county(i).id,
                j + 1,
                mean.as_f64(),
                quantile_sorted(&vals, 0.025).as_f64(),
                quantile_sorted(&vals, 0.5).as_f64(),
                quantile_sorted(&vals, 0.975).as_f64()
            )?;
        }
    }
    out.flush()?;

    // posterior-mean effects per county, correlated across domains
    let mut means = vec![vec![0.0f64; output.sizes.counties]; d];
    for draw in &output.draws {
        for (i, beta) in draw.state.beta.iter().enumerate() {
            for j in 0..d {
                means[j][i] += beta[j].as_f64() / n_draws as f64;
            }
        }
    }
    let mut out = writer(dir, "beta_correlation.csv")?;
    writeln!(out, "domain_a,domain_b,correlation")?;
    for a in 0..d {
        for b in a + 1..d {
            writeln!(out, "{},{},{}", a + 1, b + 1, correlation(&means[a], &means[b]))?;
        }
    }
    out.flush()?;

    let mut out = writer(dir, "k_posterior.csv")?;
    writeln!(out, "k,probability")?;
    for (k, prob) in output.k_posterior() {
        writeln!(out, "{k},{prob}")?;
    }
    out.flush()?;

    let mut out = writer(dir, "nu_summary.csv")?;
    writeln!(out, "stratum_id,mean_nu")?;
    for s in 0..output.sizes.strata {
        let mean =
            output.draws.iter().map(|dr| dr.state.nu[s]).sum::<T>() / T::of(n_draws as f64);
        writeln!(out, "{},{}", data.stratum(s).id, mean.as_f64())?;
    }
    out.flush()?;

    let mut out = writer(dir, "atom_mu.csv")?;
    write!(out, "iteration,cluster,size")?;
    for j in 1..=d {
        write!(out, ",mu_{j}")?;
    }
    writeln!(out)?;
    for draw in &output.draws {
        for (label, (_, cl)) in draw.state.clusters.clusters().enumerate() {
            write!(out, "{},{label},{}", draw.iteration, cl.size)?;
            for j in 0..d {
                write!(out, ",{}", cl.atom.mu()[j].as_f64())?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
