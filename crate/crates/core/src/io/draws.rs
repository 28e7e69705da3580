//! Posterior draw persistence: one delimited file per parameter family,
//! row-indexed by sweep iteration, plus `manifest.json` describing the run.
//!
//! Families: `b.csv`, `beta.csv`, `nu.csv`, `delta_sq.csv`, `alpha.csv`,
//! `loglik.csv`, `clusters.csv` (dense per-draw labels), `atoms.csv`, and
//! `base.csv`. County, stratum, and mega-stratum rows carry the dataset's
//! ids, so reloading needs the dataset the chain was fitted on. A round
//! trip reconstructs the chain output exactly up to cluster relabeling
//! (labels are compacted to 0..k per draw on write; sweep semantics only
//! ever use their order, never their values).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::HyperConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::json::{read_json, write_json};
use crate::sampler::{AcceptanceSummary, ChainMode, ChainOutput, ChainSizes, SavedDraw};
use crate::scalar::Scalar;
use crate::state::{Atom, BaseMeasure, ClusterState, ModelState};

/// Everything that identifies a fitted run: config snapshot, dataset digest,
/// seed, code version, timestamps, sizes, and acceptance rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RunManifest<T: Scalar> {
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// SHA-256 of the dataset file the chain was fitted on.
    pub dataset_sha256: String,
    pub seed: u64,
    pub stream: u64,
    /// "mixture" or "single-cluster".
    pub mode: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub saved_draws: usize,
    pub counties: usize,
    pub strata: usize,
    pub megas: usize,
    pub states: usize,
    pub domains: usize,
    pub covariates: usize,
    pub acceptance_b: f64,
    pub acceptance_beta: f64,
    pub acceptance_nu: f64,
    pub acceptance_sweeps: usize,
    pub config: HyperConfig<T>,
}

fn mode_name(mode: ChainMode) -> &'static str {
    match mode {
        ChainMode::Mixture => "mixture",
        ChainMode::SingleCluster => "single-cluster",
    }
}

impl<T: Scalar> RunManifest<T> {
    /// Builds the manifest for a finished chain. Timestamps are the caller's
    /// responsibility so that runs can be made byte-reproducible.
    pub fn new(
        output: &ChainOutput<T>,
        config: &HyperConfig<T>,
        dataset_sha256: String,
        tool_version: &str,
        started_unix: u64,
        finished_unix: u64,
    ) -> Self {
        Self {
            tool_version: tool_version.to_string(),
            started_unix,
            finished_unix,
            dataset_sha256,
            seed: output.seed,
            stream: output.stream,
            mode: mode_name(output.mode).to_string(),
            iterations: output.iterations,
            burn_in: output.burn_in,
            thin: output.thin,
            saved_draws: output.draws.len(),
            counties: output.sizes.counties,
            strata: output.sizes.strata,
            megas: output.sizes.megas,
            states: output.sizes.states,
            domains: output.sizes.domains,
            covariates: output.sizes.covariates,
            acceptance_b: output.acceptance.b_rate,
            acceptance_beta: output.acceptance.beta_rate,
            acceptance_nu: output.acceptance.nu_rate,
            acceptance_sweeps: output.acceptance.sweeps,
            config: config.clone(),
        }
    }

    pub fn chain_mode(&self) -> Result<ChainMode> {
        match self.mode.as_str() {
            "mixture" => Ok(ChainMode::Mixture),
            "single-cluster" => Ok(ChainMode::SingleCluster),
            other => Err(Error::Config(format!("unknown chain mode {other:?} in manifest"))),
        }
    }
}

fn f<T: Scalar>(v: T) -> f64 {
    v.as_f64()
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the manifest and every parameter-family file into `dir`.
pub fn write_draws<T: Scalar>(
    dir: &Path,
    output: &ChainOutput<T>,
    data: &Dataset<T>,
    manifest: &RunManifest<T>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("manifest.json"), manifest)?;
    let d = output.sizes.domains;
    let p = output.sizes.covariates;

    let mut b = writer(dir, "b.csv")?;
    write!(b, "iteration")?;
    for j in 1..=p {
        write!(b, ",b_{j}")?;
    }
    writeln!(b)?;

    let mut beta = writer(dir, "beta.csv")?;
    write!(beta, "iteration,county_id")?;
    for j in 1..=d {
        write!(beta, ",beta_{j}")?;
    }
    writeln!(beta)?;

    let mut nu = writer(dir, "nu.csv")?;
    writeln!(nu, "iteration,stratum_id,nu")?;
    let mut delta = writer(dir, "delta_sq.csv")?;
    writeln!(delta, "iteration,mega_stratum_id,delta_sq")?;
    let mut alpha = writer(dir, "alpha.csv")?;
    writeln!(alpha, "iteration,alpha")?;
    let mut loglik = writer(dir, "loglik.csv")?;
    writeln!(loglik, "iteration,loglik")?;
    let mut clusters = writer(dir, "clusters.csv")?;
    writeln!(clusters, "iteration,county_id,cluster")?;

    let mut atoms = writer(dir, "atoms.csv")?;
    write!(atoms, "iteration,cluster")?;
    for j in 1..=d {
        write!(atoms, ",mu_{j}")?;
    }
    for r in 1..=d {
        for c in 1..=d {
            write!(atoms, ",sigma_{r}_{c}")?;
        }
    }
    writeln!(atoms)?;

    let mut base = writer(dir, "base.csv")?;
    write!(base, "iteration")?;
    for j in 1..=d {
        write!(base, ",m_{j}")?;
    }
    for r in 1..=d {
        for c in 1..=d {
            write!(base, ",B_{r}_{c}")?;
        }
    }
    for r in 1..=d {
        for c in 1..=d {
            write!(base, ",S_{r}_{c}")?;
        }
    }
    writeln!(base)?;

    for draw in &output.draws {
        let t = draw.iteration;
        let st = &draw.state;

        write!(b, "{t}")?;
        for j in 0..p {
            write!(b, ",{}", f(st.b[j]))?;
        }
        writeln!(b)?;

        for (i, bv) in st.beta.iter().enumerate() {
            write!(beta, "{t},{}", data.county(i).id)?;
            for j in 0..d {
                write!(beta, ",{}", f(bv[j]))?;
            }
            writeln!(beta)?;
        }

        for (s, &v) in st.nu.iter().enumerate() {
            writeln!(nu, "{t},{},{}", data.stratum(s).id, f(v))?;
        }
        for (m, &v) in st.delta_sq.iter().enumerate() {
            writeln!(delta, "{t},{},{}", data.megas()[m], f(v))?;
        }
        writeln!(alpha, "{t},{}", f(st.alpha))?;
        writeln!(loglik, "{t},{}", f(draw.loglik))?;

        // compact labels: ascending cluster id -> 0..k
        let dense: BTreeMap<_, _> =
            st.clusters.clusters().enumerate().map(|(j, (id, _))| (id, j)).collect();
        for (i, id) in st.clusters.assignments().iter().enumerate() {
            writeln!(clusters, "{t},{},{}", data.county(i).id, dense[id])?;
        }
        for (id, cl) in st.clusters.clusters() {
            write!(atoms, "{t},{}", dense[&id])?;
            for j in 0..d {
                write!(atoms, ",{}", f(cl.atom.mu()[j]))?;
            }
            let sigma = cl.atom.sigma();
            for r in 0..d {
                for c in 0..d {
                    write!(atoms, ",{}", f(sigma[(r, c)]))?;
                }
            }
            writeln!(atoms)?;
        }

        write!(base, "{t}")?;
        for j in 0..d {
            write!(base, ",{}", f(st.base.m()[j]))?;
        }
        let bc = st.base.b_cov();
        for r in 0..d {
            for c in 0..d {
                write!(base, ",{}", f(bc[(r, c)]))?;
            }
        }
        let sc = st.base.s_scale();
        for r in 0..d {
            for c in 0..d {
                write!(base, ",{}", f(sc[(r, c)]))?;
            }
        }
        writeln!(base)?;
    }

    for w in [&mut b, &mut beta, &mut nu, &mut delta, &mut alpha, &mut loglik, &mut clusters] {
        w.flush()?;
    }
    atoms.flush()?;
    base.flush()?;
    Ok(())
}

/// Per-iteration accumulator while parsing the family files.
struct Parts<T: Scalar> {
    b: Option<DVector<T>>,
    beta: BTreeMap<usize, DVector<T>>,
    nu: BTreeMap<usize, T>,
    delta_sq: BTreeMap<usize, T>,
    alpha: Option<T>,
    loglik: Option<T>,
    labels: BTreeMap<usize, usize>,
    atoms: BTreeMap<usize, Atom<T>>,
    base: Option<BaseMeasure<T>>,
}

impl<T: Scalar> Default for Parts<T> {
    fn default() -> Self {
        Self {
            b: None,
            beta: BTreeMap::new(),
            nu: BTreeMap::new(),
            delta_sq: BTreeMap::new(),
            alpha: None,
            loglik: None,
            labels: BTreeMap::new(),
            atoms: BTreeMap::new(),
            base: None,
        }
    }
}

fn parse<F: std::str::FromStr>(raw: &str, line: usize, name: &str) -> Result<F> {
    raw.parse().map_err(|_| Error::Parse { line, message: format!("bad {name}: {raw:?}") })
}

fn scalar<T: Scalar>(raw: &str, line: usize, name: &str) -> Result<T> {
    parse::<f64>(raw, line, name).map(T::of)
}

/// Reads one family file and hands each data row (line number, fields) to
/// the visitor. The header is checked verbatim.
fn for_rows(
    dir: &Path,
    name: &str,
    header: &str,
    mut visit: impl FnMut(usize, &[&str]) -> Result<()>,
) -> Result<()> {
    let text = fs::read_to_string(dir.join(name))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first == header => {}
        Some((_, first)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("{name}: header {first:?} should be {header:?}"),
            });
        }
        None => return Err(Error::Parse { line: 1, message: format!("{name} is empty") }),
    }
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        visit(idx + 1, &fields)?;
    }
    Ok(())
}

fn vector_tail<T: Scalar>(fields: &[&str], start: usize, line: usize) -> Result<DVector<T>> {
    fields[start..]
        .iter()
        .map(|raw| scalar(raw, line, "value"))
        .collect::<Result<Vec<T>>>()
        .map(DVector::from_vec)
}

fn matrix_at<T: Scalar>(fields: &[&str], start: usize, d: usize, line: usize) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            out[(r, c)] = scalar(fields[start + r * d + c], line, "matrix entry")?;
        }
    }
    Ok(out)
}

fn need(fields: &[&str], n: usize, line: usize, name: &str) -> Result<()> {
    if fields.len() != n {
        return Err(Error::Parse {
            line,
            message: format!("{name}: row has {} fields, expected {n}", fields.len()),
        });
    }
    Ok(())
}

/// Reloads a persisted run. `data` must be the dataset the chain was fitted
/// on (the manifest records its digest; callers check it before trusting the
/// id mappings).
pub fn read_draws<T: Scalar>(
    dir: &Path,
    data: &Dataset<T>,
) -> Result<(ChainOutput<T>, RunManifest<T>)> {
    let manifest: RunManifest<T> = read_json(&dir.join("manifest.json"))?;
    manifest.config.validate()?;
    let mode = manifest.chain_mode()?;
    let sizes = ChainSizes::of(data);
    if sizes.counties != manifest.counties
        || sizes.strata != manifest.strata
        || sizes.megas != manifest.megas
        || sizes.domains != manifest.domains
        || sizes.covariates != manifest.covariates
    {
        return Err(Error::Config(
            "dataset dimensions do not match the manifest; wrong dataset for these draws".into(),
        ));
    }
    let d = manifest.domains;
    let p = manifest.covariates;
    let s_df = manifest.config.s_df;

    let mut parts: BTreeMap<usize, Parts<T>> = BTreeMap::new();

    let county_index = |raw: &str, line: usize| -> Result<usize> {
        let id: u64 = parse(raw, line, "county_id")?;
        data.county_index(id).ok_or(Error::UnknownCounty(id))
    };

    for_rows(dir, "b.csv", &{
        let mut h = String::from("iteration");
        for j in 1..=p {
            h.push_str(&format!(",b_{j}"));
        }
        h
    }, |line, fields| {
        need(fields, 1 + p, line, "b.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        parts.entry(t).or_default().b = Some(vector_tail(fields, 1, line)?);
        Ok(())
    })?;

    for_rows(dir, "beta.csv", &{
        let mut h = String::from("iteration,county_id");
        for j in 1..=d {
            h.push_str(&format!(",beta_{j}"));
        }
        h
    }, |line, fields| {
        need(fields, 2 + d, line, "beta.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let i = county_index(fields[1], line)?;
        parts.entry(t).or_default().beta.insert(i, vector_tail(fields, 2, line)?);
        Ok(())
    })?;

    for_rows(dir, "nu.csv", "iteration,stratum_id,nu", |line, fields| {
        need(fields, 3, line, "nu.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let id: u64 = parse(fields[1], line, "stratum_id")?;
        let s = data.stratum_index(id).ok_or(Error::UnknownStratum(id))?;
        parts.entry(t).or_default().nu.insert(s, scalar(fields[2], line, "nu")?);
        Ok(())
    })?;

    for_rows(dir, "delta_sq.csv", "iteration,mega_stratum_id,delta_sq", |line, fields| {
        need(fields, 3, line, "delta_sq.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let id: u64 = parse(fields[1], line, "mega_stratum_id")?;
        let m = data
            .mega_index(id)
            .ok_or_else(|| Error::Parse { line, message: format!("unknown mega-stratum {id}") })?;
        parts.entry(t).or_default().delta_sq.insert(m, scalar(fields[2], line, "delta_sq")?);
        Ok(())
    })?;

    for_rows(dir, "alpha.csv", "iteration,alpha", |line, fields| {
        need(fields, 2, line, "alpha.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        parts.entry(t).or_default().alpha = Some(scalar(fields[1], line, "alpha")?);
        Ok(())
    })?;

    for_rows(dir, "loglik.csv", "iteration,loglik", |line, fields| {
        need(fields, 2, line, "loglik.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        parts.entry(t).or_default().loglik = Some(scalar(fields[1], line, "loglik")?);
        Ok(())
    })?;

    for_rows(dir, "clusters.csv", "iteration,county_id,cluster", |line, fields| {
        need(fields, 3, line, "clusters.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let i = county_index(fields[1], line)?;
        parts.entry(t).or_default().labels.insert(i, parse(fields[2], line, "cluster")?);
        Ok(())
    })?;

    for_rows(dir, "atoms.csv", &{
        let mut h = String::from("iteration,cluster");
        for j in 1..=d {
            h.push_str(&format!(",mu_{j}"));
        }
        for r in 1..=d {
            for c in 1..=d {
                h.push_str(&format!(",sigma_{r}_{c}"));
            }
        }
        h
    }, |line, fields| {
        need(fields, 2 + d + d * d, line, "atoms.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let label: usize = parse(fields[1], line, "cluster")?;
        let mu = DVector::from_vec(
            (0..d).map(|j| scalar(fields[2 + j], line, "mu")).collect::<Result<Vec<T>>>()?,
        );
        let sigma = matrix_at(fields, 2 + d, d, line)?;
        parts.entry(t).or_default().atoms.insert(label, Atom::new(mu, sigma)?);
        Ok(())
    })?;

    for_rows(dir, "base.csv", &{
        let mut h = String::from("iteration");
        for j in 1..=d {
            h.push_str(&format!(",m_{j}"));
        }
        for r in 1..=d {
            for c in 1..=d {
                h.push_str(&format!(",B_{r}_{c}"));
            }
        }
        for r in 1..=d {
            for c in 1..=d {
                h.push_str(&format!(",S_{r}_{c}"));
            }
        }
        h
    }, |line, fields| {
        need(fields, 1 + d + 2 * d * d, line, "base.csv")?;
        let t: usize = parse(fields[0], line, "iteration")?;
        let m = DVector::from_vec(
            (0..d).map(|j| scalar(fields[1 + j], line, "m")).collect::<Result<Vec<T>>>()?,
        );
        let b_cov = matrix_at(fields, 1 + d, d, line)?;
        let s_scale = matrix_at(fields, 1 + d + d * d, d, line)?;
        parts.entry(t).or_default().base = Some(BaseMeasure::new(m, b_cov, s_scale, s_df)?);
        Ok(())
    })?;

    let mut draws = Vec::with_capacity(parts.len());
    for (t, part) in parts {
        let missing = |what: &str| {
            Error::Parse { line: 0, message: format!("iteration {t}: missing {what}") }
        };
        if part.beta.len() != sizes.counties || part.labels.len() != sizes.counties {
            return Err(missing("county rows"));
        }
        if part.nu.len() != sizes.strata {
            return Err(missing("stratum rows"));
        }
        if part.delta_sq.len() != sizes.megas {
            return Err(missing("mega-stratum rows"));
        }
        let k = part.atoms.len();
        if part.atoms.keys().enumerate().any(|(j, &label)| j != label) {
            return Err(missing("dense cluster labels"));
        }
        let labels: Vec<usize> = part.labels.into_values().collect();
        if labels.iter().any(|&l| l >= k) {
            return Err(missing("an atom for every label"));
        }
        let clusters =
            ClusterState::from_assignments(&labels, part.atoms.into_values().collect())?;
        let state = ModelState {
            b: part.b.ok_or_else(|| missing("b row"))?,
            beta: part.beta.into_values().collect(),
            nu: part.nu.into_values().collect(),
            delta_sq: part.delta_sq.into_values().collect(),
            clusters,
            base: part.base.ok_or_else(|| missing("base row"))?,
            alpha: part.alpha.ok_or_else(|| missing("alpha row"))?,
        };
        state.validate(sizes.counties, sizes.strata, sizes.megas, d, p)?;
        draws.push(SavedDraw {
            iteration: t,
            state,
            loglik: part.loglik.ok_or_else(|| missing("loglik row"))?,
        });
    }
    if draws.len() != manifest.saved_draws {
        return Err(Error::Config(format!(
            "draw files hold {} iterations, manifest promises {}",
            draws.len(),
            manifest.saved_draws
        )));
    }

    let output = ChainOutput {
        sizes,
        mode,
        seed: manifest.seed,
        stream: manifest.stream,
        iterations: manifest.iterations,
        burn_in: manifest.burn_in,
        thin: manifest.thin,
        draws,
        acceptance: AcceptanceSummary {
            b_rate: manifest.acceptance_b,
            beta_rate: manifest.acceptance_beta,
            nu_rate: manifest.acceptance_nu,
            sweeps: manifest.acceptance_sweeps,
        },
    };
    Ok((output, manifest))
}
