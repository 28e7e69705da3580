//! JSON files: hyperparameter configuration, truth specifications, and
//! truth records. Configs and truth specs are validated on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::HyperConfig;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::synthetic::{TruthRecord, TruthSpec};

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Pretty-printed JSON with a trailing newline; key order follows the struct
/// definition, so bytes are deterministic.
pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Reads a config and checks every invariant (dimensions, SPD matrices,
/// degrees of freedom, sweep bookkeeping).
pub fn read_config<T: Scalar>(path: &Path) -> Result<HyperConfig<T>> {
    let config: HyperConfig<T> = read_json(path)?;
    config.validate()?;
    Ok(config)
}

/// Reads and validates a synthetic-truth specification.
pub fn read_truth_spec<T: Scalar>(path: &Path) -> Result<TruthSpec<T>> {
    let spec: TruthSpec<T> = read_json(path)?;
    spec.validate()?;
    Ok(spec)
}

pub fn read_truth_record<T: Scalar>(path: &Path) -> Result<TruthRecord<T>> {
    read_json(path)
}
