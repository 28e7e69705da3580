//! File formats: datasets and targets as delimited text, configuration and
//! truth specifications as JSON, posterior draws as one delimited file per
//! parameter family plus a run manifest, and plot-ready summary tables.
//!
//! Every writer produces deterministic bytes for identical inputs: rows
//! follow the container's order, floating-point values use Rust's shortest
//! round-trip formatting, and no writer consults the clock (timestamps enter
//! only through the manifest the caller builds).

mod draws;
mod json;
mod summaries;
mod tabular;

pub use draws::{read_draws, write_draws, RunManifest};
pub use json::{
    read_config, read_json, read_truth_record, read_truth_spec, write_json,
};
pub use summaries::export_summaries;
pub use tabular::{
    read_dataset, read_target_rows, read_targets, write_dataset, write_targets,
};

use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Lowercase hex SHA-256 of a file's raw bytes; the dataset digest recorded
/// in run manifests.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
