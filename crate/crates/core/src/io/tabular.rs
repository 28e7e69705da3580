//! Dataset and prediction-target files: long-format delimited text, one row
//! per (county, domain) cell.
//!
//! The dataset header is fixed as
//! `county_id,stratum_id,mega_stratum_id,state_id,domain_id,y,n,N_pop,x_1..x_p`;
//! targets drop the `y` and `n` columns. Loading then re-serializing is
//! content-idempotent (values re-format to canonical shortest form on the
//! first round trip and are stable afterwards).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::StringRecord;

use crate::data::{CellRow, Dataset, PredictionTarget, TargetRow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DATASET_HEAD: [&str; 8] =
    ["county_id", "stratum_id", "mega_stratum_id", "state_id", "domain_id", "y", "n", "N_pop"];
const TARGET_HEAD: [&str; 6] =
    ["county_id", "stratum_id", "mega_stratum_id", "state_id", "domain_id", "N_pop"];

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

/// Checks a header against the fixed prefix and `x_1..x_p` tail; returns p.
fn check_header(record: &StringRecord, fixed: &[&str]) -> Result<usize> {
    let fields: Vec<&str> = record.iter().collect();
    if fields.len() <= fixed.len() {
        return Err(parse_err(
            1,
            format!(
                "header has {} columns, need the {} fixed columns plus x_1..x_p",
                fields.len(),
                fixed.len()
            ),
        ));
    }
    for (got, want) in fields.iter().zip(fixed) {
        if got != want {
            return Err(parse_err(1, format!("header column {got:?} should be {want:?}")));
        }
    }
    let p = fields.len() - fixed.len();
    for (j, got) in fields[fixed.len()..].iter().enumerate() {
        let want = format!("x_{}", j + 1);
        if *got != want {
            return Err(parse_err(1, format!("header column {got:?} should be {want:?}")));
        }
    }
    Ok(p)
}

fn field<F: std::str::FromStr>(
    record: &StringRecord,
    idx: usize,
    name: &str,
    line: usize,
) -> Result<F> {
    let raw = record
        .get(idx)
        .ok_or_else(|| parse_err(line, format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {name}: {raw:?}")))
}

fn record_line(record: &StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(
        |e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(format!(
                "cannot open {}: {e}",
                path.display()
            ))),
            _ => parse_err(0, e.to_string()),
        },
    )
}

fn xs<T: Scalar>(record: &StringRecord, start: usize, p: usize, line: usize) -> Result<Vec<T>> {
    if record.len() != start + p {
        return Err(parse_err(
            line,
            format!("row has {} columns, header promised {}", record.len(), start + p),
        ));
    }
    (0..p)
        .map(|j| field::<f64>(record, start + j, &format!("x_{}", j + 1), line).map(T::of))
        .collect()
}

/// Reads and validates a dataset file.
pub fn read_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let mut reader = open_reader(path)?;
    let p = check_header(reader.headers().map_err(|e| parse_err(1, e.to_string()))?, &DATASET_HEAD)?;
    let mut rows: Vec<CellRow<T>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(0, e.to_string()))?;
        let line = record_line(&record);
        rows.push(CellRow {
            county_id: field(&record, 0, "county_id", line)?,
            stratum_id: field(&record, 1, "stratum_id", line)?,
            mega_stratum_id: field(&record, 2, "mega_stratum_id", line)?,
            state_id: field(&record, 3, "state_id", line)?,
            domain_id: field(&record, 4, "domain_id", line)?,
            y: field(&record, 5, "y", line)?,
            n: field(&record, 6, "n", line)?,
            n_pop: field(&record, 7, "N_pop", line)?,
            x: xs(&record, 8, p, line)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::NoRecords);
    }
    Dataset::from_rows(&rows)
}

/// Reads target rows (no responses); resolve them against a dataset with
/// [`read_targets`].
pub fn read_target_rows<T: Scalar>(path: &Path) -> Result<Vec<TargetRow<T>>> {
    let mut reader = open_reader(path)?;
    let p = check_header(reader.headers().map_err(|e| parse_err(1, e.to_string()))?, &TARGET_HEAD)?;
    let mut rows: Vec<TargetRow<T>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(0, e.to_string()))?;
        let line = record_line(&record);
        rows.push(TargetRow {
            county_id: field(&record, 0, "county_id", line)?,
            stratum_id: field(&record, 1, "stratum_id", line)?,
            mega_stratum_id: field(&record, 2, "mega_stratum_id", line)?,
            state_id: field(&record, 3, "state_id", line)?,
            domain_id: field(&record, 4, "domain_id", line)?,
            n_pop: field(&record, 5, "N_pop", line)?,
            x: xs(&record, 6, p, line)?,
        });
    }
    Ok(rows)
}

/// Reads a target file and resolves it against the dataset it extends.
pub fn read_targets<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<PredictionTarget<T>> {
    PredictionTarget::resolve(&read_target_rows(path)?, data)
}

fn fmt_row<T: Scalar>(values: &[T]) -> String {
    let mut out = String::new();
    for v in values {
        let _ = write!(out, ",{}", v.as_f64());
    }
    out
}

/// Writes a dataset in the fixed wire format.
pub fn write_dataset<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{}", DATASET_HEAD.join(","))?;
    for j in 1..=data.p() {
        write!(out, ",x_{j}")?;
    }
    writeln!(out)?;
    for r in data.to_rows() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}{}",
            r.county_id,
            r.stratum_id,
            r.mega_stratum_id,
            r.state_id,
            r.domain_id,
            r.y,
            r.n,
            r.n_pop,
            fmt_row(&r.x)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes prediction targets in the same format minus the response columns.
pub fn write_targets<T: Scalar>(
    path: &Path,
    targets: &PredictionTarget<T>,
    data: &Dataset<T>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{}", TARGET_HEAD.join(","))?;
    let p = data.p();
    for j in 1..=p {
        write!(out, ",x_{j}")?;
    }
    writeln!(out)?;
    for r in targets.to_rows(data) {
        writeln!(
            out,
            "{},{},{},{},{},{}{}",
            r.county_id,
            r.stratum_id,
            r.mega_stratum_id,
            r.state_id,
            r.domain_id,
            r.n_pop,
            fmt_row(&r.x)
        )?;
    }
    out.flush()?;
    Ok(())
}
