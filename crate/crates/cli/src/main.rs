//! `sae`: fit the hierarchical mixture model, predict state totals, generate
//! synthetic data, and verify the sampler.
//!
//! Every command is deterministic given its inputs: chains run on a seed
//! recorded in the run manifest, prediction reuses that seed on a dedicated
//! stream, and output files are written with stable bytes. The one
//! environment variable, `SAE_OUT_DIR`, redirects relative output
//! directories; everything else comes in through flags.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sae_core::io;
use sae_core::kernels::RngStream;
use sae_core::predict::{
    predict_totals, sample_average_estimate, state_universe, summarize_totals, synthetic_estimate,
    StateSummary,
};
use sae_core::sampler::{run_chain, run_parametric_chain, Mutation};
use sae_core::synthetic::{demo_spec, generate};
use sae_core::{Dataset, HyperConfig, PredictionTarget, RunManifest, TruthSpec};

mod checks;

/// The only environment variable the tool reads.
const OUT_DIR_VAR: &str = "SAE_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "sae",
    version,
    about = "Small area estimation of binomial outcomes with a Dirichlet-process county mixture",
    after_help = "Relative --out paths are resolved under $SAE_OUT_DIR when it is set."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MCMC sampler on a dataset and save posterior draws.
    Fit(FitArgs),
    /// Simulate and summarize state totals from saved draws.
    Predict(PredictArgs),
    /// Generate a synthetic dataset with recorded truth.
    Simulate(SimulateArgs),
    /// Verify the sampler against oracles and a joint-distribution test.
    Check(CheckArgs),
    /// Fit mixture and single-cluster chains and tabulate every estimator.
    Compare(CompareArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Survey dataset CSV (one row per sampled county and domain).
    #[arg(long)]
    dataset: PathBuf,
    /// Hyperparameter configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Directory to write the draws and run manifest into.
    #[arg(long)]
    out: PathBuf,
    /// Collapse the county mixture to one shared normal.
    #[arg(long)]
    single_cluster: bool,
    /// Unix timestamp recorded in the manifest instead of the wall clock;
    /// pinning it makes the fit output byte-reproducible.
    #[arg(long)]
    timestamp: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory holding a previous fit (draws plus manifest).
    #[arg(long)]
    draws: PathBuf,
    /// The dataset the draws were fitted on; its digest is verified
    /// against the manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Unsampled-county target CSV; omit to aggregate sampled counties only.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Directory to write totals and summary tables into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Truth specification JSON.
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    spec: Option<PathBuf>,
    /// Use the built-in two-cluster example instead of a spec file, and also
    /// write the spec and a ready-to-fit config alongside the data.
    #[arg(long)]
    demo: bool,
    /// Override the specification's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory to write dataset.csv, targets.csv, and truth.json into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Inject a known sampler fault; the checks must then fail.
    #[arg(long, value_enum)]
    mutation: Option<MutationArg>,
    /// Draws per chain in the joint-distribution test.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    /// |z| threshold for the joint-distribution test.
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    /// Seed for every check.
    #[arg(long, default_value_t = 20260501)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// Survey dataset CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// Unsampled-county target CSV.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Hyperparameter configuration JSON, used for both chains.
    #[arg(long)]
    config: PathBuf,
    /// Directory to write compare.csv into; omit to print only.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Known sampler faults, used to validate that `check` actually detects bugs.
#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    /// Acceptance ratio evaluated under the wrong proposal density.
    WrongMhDensity,
    /// Stratum-variance update with half the correct rate.
    WrongDeltaRate,
    /// Auxiliary atoms weighted by the full mixture mass.
    WrongAuxWeight,
}

impl From<MutationArg> for Mutation {
    fn from(arg: MutationArg) -> Self {
        match arg {
            MutationArg::WrongMhDensity => Mutation::WrongMhDensity,
            MutationArg::WrongDeltaRate => Mutation::WrongDeltaRate,
            MutationArg::WrongAuxWeight => Mutation::WrongAuxWeight,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => run_fit(&args),
        Command::Predict(args) => run_predict(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Check(args) => checks::run(
            args.seed,
            args.samples,
            args.threshold,
            args.mutation.map_or(Mutation::None, Mutation::from),
        ),
        Command::Compare(args) => run_compare(&args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Applies the `SAE_OUT_DIR` override to relative output paths.
fn out_dir(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(base) if path.is_relative() => PathBuf::from(base).join(path),
        _ => path.to_path_buf(),
    }
}

fn now_unix() -> Result<u64> {
    Ok(SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    io::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn read_targets_or_empty(path: Option<&PathBuf>, data: &Dataset) -> Result<PredictionTarget> {
    match path {
        Some(p) => {
            io::read_targets(p, data).with_context(|| format!("reading targets {}", p.display()))
        }
        None => Ok(PredictionTarget::empty()),
    }
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let data = read_dataset(&args.dataset)?;
    let config: HyperConfig =
        io::read_config(&args.config).with_context(|| format!("reading config {}", args.config.display()))?;
    let digest = io::sha256_file(&args.dataset)?;

    let started = match args.timestamp {
        Some(t) => t,
        None => now_unix()?,
    };
    let output = if args.single_cluster {
        run_parametric_chain(&data, &config)?
    } else {
        run_chain(&data, &config)?
    };
    let finished = match args.timestamp {
        Some(t) => t,
        None => now_unix()?,
    };

    let manifest =
        RunManifest::new(&output, &config, digest, env!("CARGO_PKG_VERSION"), started, finished);
    let out = out_dir(&args.out);
    io::write_draws(&out, &output, &data, &manifest)?;

    println!(
        "fit: {} counties, {} strata, {} states, D = {}, p = {}",
        output.sizes.counties, output.sizes.strata, output.sizes.states, output.sizes.domains, data.p()
    );
    println!(
        "{} chain: {} sweeps, burn-in {}, thin {} -> {} draws",
        manifest.mode, output.iterations, output.burn_in, output.thin, output.draws.len()
    );
    println!(
        "acceptance rates: b {:.2}, beta {:.2}, nu {:.2}",
        output.acceptance.b_rate, output.acceptance.beta_rate, output.acceptance.nu_rate
    );
    println!("posterior mode of k: {}", output.k_mode());
    println!("wrote {}", out.display());
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let data = read_dataset(&args.dataset)?;
    let (output, manifest) = io::read_draws(&args.draws, &data)
        .with_context(|| format!("reading draws {}", args.draws.display()))?;
    let digest = io::sha256_file(&args.dataset)?;
    if digest != manifest.dataset_sha256 {
        bail!(
            "dataset {} is not the one the draws were fitted on (sha256 {digest}, manifest says {})",
            args.dataset.display(),
            manifest.dataset_sha256
        );
    }
    let targets = read_targets_or_empty(args.targets.as_ref(), &data)?;

    // The fit consumed stream 0 of the seed; prediction gets its own stream
    // so output is a pure function of draws, dataset, and targets.
    let stream = RngStream::new(manifest.seed, 1);
    let totals = predict_totals(&output, &data, &targets, &stream)?;
    let summaries = summarize_totals::<f64>(&totals)?;

    let out = out_dir(&args.out);
    io::export_summaries(&out, &output, &data, &targets, &totals)?;

    println!(
        "predict: {} draws, {} sampled + {} unsampled counties, {} states",
        totals.len(),
        output.sizes.counties,
        targets.counties().len(),
        summaries.len()
    );
    print_state_table(&summaries);
    println!("wrote {}", out.display());
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec: TruthSpec = match &args.spec {
        Some(path) => io::read_truth_spec(path)
            .with_context(|| format!("reading truth spec {}", path.display()))?,
        None => demo_spec(20260501),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (data, targets, record) = generate(&spec)?;

    let out = out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    io::write_dataset(&out.join("dataset.csv"), &data)?;
    io::write_targets(&out.join("targets.csv"), &targets, &data)?;
    io::write_json(&out.join("truth.json"), &record)?;
    if args.demo {
        io::write_json(&out.join("truth_spec.json"), &spec)?;
        let config: HyperConfig = HyperConfig::defaults(data.n_domains(), data.p(), spec.seed);
        io::write_json(&out.join("config.json"), &config)?;
    }

    println!(
        "simulate: {} sampled counties ({} cells), {} targets, {} strata, {} states, seed {}",
        data.counties().len(),
        data.cells().len(),
        targets.counties().len(),
        data.strata().len(),
        data.states().len(),
        spec.seed
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let data = read_dataset(&args.dataset)?;
    let config: HyperConfig =
        io::read_config(&args.config).with_context(|| format!("reading config {}", args.config.display()))?;
    let targets = read_targets_or_empty(args.targets.as_ref(), &data)?;

    let mixture = run_chain(&data, &config)?;
    let single = run_parametric_chain(&data, &config)?;
    let mix_totals = predict_totals(&mixture, &data, &targets, &RngStream::new(config.seed, 1))?;
    let single_totals = predict_totals(&single, &data, &targets, &RngStream::new(config.seed, 2))?;
    let mix_sum = summarize_totals::<f64>(&mix_totals)?;
    let single_sum = summarize_totals::<f64>(&single_totals)?;
    let synthetic = synthetic_estimate(&data, &targets)?;
    let universe = state_universe(&data, &targets);
    let sample = sample_average_estimate(&data, &universe);

    println!(
        "compare: mixture k mode {}, single-cluster baseline, {} states",
        mixture.k_mode(),
        mix_sum.len()
    );
    println!(
        "{:>8} {:>12} {:>16} {:>16} {:>10} {:>16}",
        "state", "N", "mixture", "single-cluster", "synthetic", "sample"
    );
    let mut lines = Vec::new();
    for (i, mix) in mix_sum.iter().enumerate() {
        let sin = &single_sum[i];
        let syn = &synthetic[i];
        let avg = &sample[i];
        let sample_txt = match avg.estimate {
            Some((est, se)) => format!("{est:.2} ({se:.2})"),
            None => "-".to_string(),
        };
        println!(
            "{:>8} {:>12} {:>16} {:>16} {:>10.2} {:>16}",
            mix.state_id,
            mix.n_pop,
            format!("{:.2} +- {:.2}", mix.mean_pct, mix.sd_pct),
            format!("{:.2} +- {:.2}", sin.mean_pct, sin.sd_pct),
            syn.pct,
            sample_txt
        );
        let (s_est, s_se) = match avg.estimate {
            Some((est, se)) => (format!("{est}"), format!("{se}")),
            None => (String::new(), String::new()),
        };
        lines.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            mix.state_id,
            mix.n_pop,
            mix.mean_pct,
            mix.sd_pct,
            sin.mean_pct,
            sin.sd_pct,
            syn.pct,
            s_est,
            s_se
        ));
    }

    if let Some(out) = &args.out {
        let out = out_dir(out);
        std::fs::create_dir_all(&out)?;
        let mut csv = String::from(
            "state_id,n_pop,mixture_pct,mixture_sd_pct,single_cluster_pct,single_cluster_sd_pct,synthetic_pct,sample_pct,sample_se_pct\n",
        );
        for line in &lines {
            csv.push_str(line);
            csv.push('\n');
        }
        std::fs::write(out.join("compare.csv"), csv)?;
        println!("wrote {}", out.join("compare.csv").display());
    }
    Ok(())
}

fn print_state_table(summaries: &[StateSummary<f64>]) {
    println!(
        "{:>8} {:>12} {:>8} {:>7} {:>8} {:>8} {:>8}",
        "state", "N", "mean%", "sd%", "2.5%", "50%", "97.5%"
    );
    for s in summaries {
        println!(
            "{:>8} {:>12} {:>8.2} {:>7.2} {:>8.2} {:>8.2} {:>8.2}",
            s.state_id, s.n_pop, s.mean_pct, s.sd_pct, s.q025_pct, s.median_pct, s.q975_pct
        );
    }
}
