//! Survey dataset schema, indexing, and validation.
//!
//! The wire format is one long-format row per (county, domain) cell carrying
//! the full nesting path: county in stratum in mega-stratum, plus state
//! membership for aggregation. [`Dataset`] resolves those rows into dense
//! zero-based indices so the sampler never touches raw ids. Validation
//! returns a list of [`Violation`]s rather than failing on the first problem.

use nalgebra::DVector;

use crate::error::{Error, Result, Violation};
use crate::scalar::Scalar;

/// One long-format dataset row: a sampled (county, domain) cell.
///
/// `domain_id` is 1-based on the wire; internal structures use 0-based
/// domain indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow<T: Scalar> {
    pub county_id: u64,
    pub stratum_id: u64,
    pub mega_stratum_id: u64,
    pub state_id: u64,
    pub domain_id: usize,
    pub y: u64,
    pub n: u64,
    pub n_pop: u64,
    pub x: Vec<T>,
}

/// One prediction-target row: an unsampled (county, domain) cell. Same
/// nesting path as [`CellRow`] but no observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow<T: Scalar> {
    pub county_id: u64,
    pub stratum_id: u64,
    pub mega_stratum_id: u64,
    pub state_id: u64,
    pub domain_id: usize,
    pub n_pop: u64,
    pub x: Vec<T>,
}

/// A sampled county, with indices into the dataset's stratum and state lists.
#[derive(Debug, Clone, PartialEq)]
pub struct County {
    pub id: u64,
    pub stratum: usize,
    pub state: usize,
}

/// A sampled stratum, with an index into the dataset's mega-stratum list.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub id: u64,
    pub mega: usize,
}

/// An indexed cell. `county` indexes [`Dataset::counties`], `domain` is
/// 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T: Scalar> {
    pub county: usize,
    pub domain: usize,
    pub y: u64,
    pub n: u64,
    pub n_pop: u64,
    pub x: DVector<T>,
}

/// An indexed, validated survey dataset.
///
/// Counties, strata, mega-strata, and states are each sorted by external id;
/// cells are sorted by (county, domain) so one county's cells are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    n_domains: usize,
    p: usize,
    counties: Vec<County>,
    strata: Vec<Stratum>,
    megas: Vec<u64>,
    states: Vec<u64>,
    cells: Vec<Cell<T>>,
    county_cells: Vec<(usize, usize)>,
    stratum_counties: Vec<Vec<usize>>,
    mega_strata: Vec<Vec<usize>>,
    state_counties: Vec<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from wire rows, rejecting any rule violations.
    pub fn from_rows(rows: &[CellRow<T>]) -> Result<Self> {
        let violations = validate_rows(rows);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }

        let p = rows[0].x.len();
        let n_domains = rows.iter().map(|r| r.domain_id).max().unwrap_or(0);

        let mut county_ids: Vec<u64> = rows.iter().map(|r| r.county_id).collect();
        county_ids.sort_unstable();
        county_ids.dedup();
        let mut stratum_ids: Vec<u64> = rows.iter().map(|r| r.stratum_id).collect();
        stratum_ids.sort_unstable();
        stratum_ids.dedup();
        let mut megas: Vec<u64> = rows.iter().map(|r| r.mega_stratum_id).collect();
        megas.sort_unstable();
        megas.dedup();
        let mut states: Vec<u64> = rows.iter().map(|r| r.state_id).collect();
        states.sort_unstable();
        states.dedup();

        let mut strata: Vec<Stratum> = stratum_ids
            .iter()
            .map(|&id| Stratum { id, mega: usize::MAX })
            .collect();
        let mut counties: Vec<County> = county_ids
            .iter()
            .map(|&id| County { id, stratum: usize::MAX, state: usize::MAX })
            .collect();
        for r in rows {
            let si = stratum_ids.binary_search(&r.stratum_id).unwrap();
            strata[si].mega = megas.binary_search(&r.mega_stratum_id).unwrap();
            let ci = county_ids.binary_search(&r.county_id).unwrap();
            counties[ci].stratum = si;
            counties[ci].state = states.binary_search(&r.state_id).unwrap();
        }

        let mut cells: Vec<Cell<T>> = rows
            .iter()
            .map(|r| Cell {
                county: county_ids.binary_search(&r.county_id).unwrap(),
                domain: r.domain_id - 1,
                y: r.y,
                n: r.n,
                n_pop: r.n_pop,
                x: DVector::from_vec(r.x.clone()),
            })
            .collect();
        cells.sort_by_key(|c| (c.county, c.domain));

        Ok(Self::from_parts(n_domains, p, counties, strata, megas, states, cells))
    }

    /// Assembles a dataset from already-indexed parts without validation.
    /// Callers that construct parts by hand should run [`Dataset::validate`].
    pub fn from_parts(
        n_domains: usize,
        p: usize,
        counties: Vec<County>,
        strata: Vec<Stratum>,
        megas: Vec<u64>,
        states: Vec<u64>,
        mut cells: Vec<Cell<T>>,
    ) -> Self {
        cells.sort_by_key(|c| (c.county, c.domain));
        let mut county_cells = vec![(0usize, 0usize); counties.len()];
        let mut pos = 0;
        for (ci, range) in county_cells.iter_mut().enumerate() {
            let start = pos;
            while pos < cells.len() && cells[pos].county == ci {
                pos += 1;
            }
            *range = (start, pos);
        }
        let mut stratum_counties = vec![Vec::new(); strata.len()];
        let mut state_counties = vec![Vec::new(); states.len()];
        for (ci, county) in counties.iter().enumerate() {
            if county.stratum < strata.len() {
                stratum_counties[county.stratum].push(ci);
            }
            if county.state < states.len() {
                state_counties[county.state].push(ci);
            }
        }
        let mut mega_strata = vec![Vec::new(); megas.len()];
        for (si, stratum) in strata.iter().enumerate() {
            if stratum.mega < megas.len() {
                mega_strata[stratum.mega].push(si);
            }
        }
        Self {
            n_domains,
            p,
            counties,
            strata,
            megas,
            states,
            cells,
            county_cells,
            stratum_counties,
            mega_strata,
            state_counties,
        }
    }

    /// Re-checks every dataset invariant. Empty result means the dataset is
    /// well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.cells.is_empty() {
            out.push(Violation::new("empty dataset", "dataset has no cells"));
        }
        for (ci, county) in self.counties.iter().enumerate() {
            if county.stratum >= self.strata.len() {
                out.push(Violation::new(
                    "orphan county",
                    format!("county {} references missing stratum index {}", county.id, county.stratum),
                ));
            }
            if county.state >= self.states.len() {
                out.push(Violation::new(
                    "orphan county",
                    format!("county {} references missing state index {}", county.id, county.state),
                ));
            }
            let _ = ci;
        }
        for stratum in &self.strata {
            if stratum.mega >= self.megas.len() {
                out.push(Violation::new(
                    "orphan stratum",
                    format!("stratum {} references missing mega-stratum index {}", stratum.id, stratum.mega),
                ));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (idx, cell) in self.cells.iter().enumerate() {
            let place = |what: &str| format!("cell {idx}: {what}");
            if cell.county >= self.counties.len() {
                out.push(Violation::new("orphan cell", place("county index out of range")));
                continue;
            }
            let cid = self.counties[cell.county].id;
            if cell.domain >= self.n_domains {
                out.push(Violation::new(
                    "domain out of range",
                    format!("county {cid}: domain index {} with {} domains", cell.domain, self.n_domains),
                ));
            }
            if cell.y > cell.n {
                out.push(Violation::new("y>n", format!("county {cid} domain {}: y={} n={}", cell.domain + 1, cell.y, cell.n)));
            }
            if cell.n > cell.n_pop {
                out.push(Violation::new(
                    "n>N_pop",
                    format!("county {cid} domain {}: n={} N_pop={}", cell.domain + 1, cell.n, cell.n_pop),
                ));
            }
            if cell.x.len() != self.p {
                out.push(Violation::new(
                    "covariate length",
                    format!("county {cid} domain {}: {} covariates, expected {}", cell.domain + 1, cell.x.len(), self.p),
                ));
            }
            if cell.x.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new(
                    "nonfinite covariate",
                    format!("county {cid} domain {}", cell.domain + 1),
                ));
            }
            if !seen.insert((cell.county, cell.domain)) {
                out.push(Violation::new(
                    "duplicate cell",
                    format!("county {cid} domain {}", cell.domain + 1),
                ));
            }
        }
        out
    }

    /// Serializes back to wire rows, sorted by (county id, domain id).
    pub fn to_rows(&self) -> Vec<CellRow<T>> {
        self.cells
            .iter()
            .map(|c| {
                let county = &self.counties[c.county];
                let stratum = &self.strata[county.stratum];
                CellRow {
                    county_id: county.id,
                    stratum_id: stratum.id,
                    mega_stratum_id: self.megas[stratum.mega],
                    state_id: self.states[county.state],
                    domain_id: c.domain + 1,
                    y: c.y,
                    n: c.n,
                    n_pop: c.n_pop,
                    x: c.x.iter().copied().collect(),
                }
            })
            .collect()
    }

    /// Replaces cell responses in order; used when re-simulating y given a
    /// model state. Lengths must match and each y must fit its cell's n.
    pub fn set_responses(&mut self, y: &[u64]) -> Result<()> {
        if y.len() != self.cells.len() {
            return Err(Error::DimensionMismatch { expected: self.cells.len(), actual: y.len() });
        }
        for (cell, &yi) in self.cells.iter_mut().zip(y) {
            if yi > cell.n {
                return Err(Error::DomainError(format!(
                    "response {yi} exceeds cell sample size {}",
                    cell.n
                )));
            }
            cell.y = yi;
        }
        Ok(())
    }

    pub fn n_counties(&self) -> usize {
        self.counties.len()
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn n_megas(&self) -> usize {
        self.megas.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_domains(&self) -> usize {
        self.n_domains
    }

    /// Covariate dimension p.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn counties(&self) -> &[County] {
        &self.counties
    }

    pub fn county(&self, i: usize) -> &County {
        &self.counties[i]
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum(&self, s: usize) -> &Stratum {
        &self.strata[s]
    }

    pub fn megas(&self) -> &[u64] {
        &self.megas
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    /// The contiguous cell slice for one county.
    pub fn county_cells(&self, county: usize) -> &[Cell<T>] {
        let (a, b) = self.county_cells[county];
        &self.cells[a..b]
    }

    /// County indices within one stratum.
    pub fn stratum_counties(&self, stratum: usize) -> &[usize] {
        &self.stratum_counties[stratum]
    }

    /// Stratum indices within one mega-stratum.
    pub fn mega_strata(&self, mega: usize) -> &[usize] {
        &self.mega_strata[mega]
    }

    /// County indices within one state.
    pub fn state_counties(&self, state: usize) -> &[usize] {
        &self.state_counties[state]
    }

    pub fn county_index(&self, id: u64) -> Option<usize> {
        self.counties.binary_search_by_key(&id, |c| c.id).ok()
    }

    pub fn stratum_index(&self, id: u64) -> Option<usize> {
        self.strata.binary_search_by_key(&id, |s| s.id).ok()
    }

    pub fn mega_index(&self, id: u64) -> Option<usize> {
        self.megas.binary_search(&id).ok()
    }

    pub fn state_index(&self, id: u64) -> Option<usize> {
        self.states.binary_search(&id).ok()
    }
}

/// Checks wire rows against every dataset rule, returning all violations.
pub fn validate_rows<T: Scalar>(rows: &[CellRow<T>]) -> Vec<Violation> {
    let mut out = Vec::new();
    if rows.is_empty() {
        out.push(Violation::new("empty dataset", "no records"));
        return out;
    }
    let p = rows[0].x.len();
    let mut county_map: std::collections::BTreeMap<u64, (u64, u64)> = Default::default();
    let mut stratum_map: std::collections::BTreeMap<u64, u64> = Default::default();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, r) in rows.iter().enumerate() {
        let row = idx + 1;
        if r.domain_id == 0 {
            out.push(Violation::new("domain id", format!("row {row}: domain_id must be >= 1")));
        }
        if r.y > r.n {
            out.push(Violation::new("y>n", format!("row {row}: y={} n={}", r.y, r.n)));
        }
        if r.n > r.n_pop {
            out.push(Violation::new("n>N_pop", format!("row {row}: n={} N_pop={}", r.n, r.n_pop)));
        }
        if r.x.len() != p {
            out.push(Violation::new(
                "covariate length",
                format!("row {row}: {} covariates, row 1 has {p}", r.x.len()),
            ));
        }
        if r.x.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("nonfinite covariate", format!("row {row}")));
        }
        if !seen.insert((r.county_id, r.domain_id)) {
            out.push(Violation::new(
                "duplicate cell",
                format!("row {row}: county {} domain {}", r.county_id, r.domain_id),
            ));
        }
        match county_map.insert(r.county_id, (r.stratum_id, r.state_id)) {
            Some(prev) if prev != (r.stratum_id, r.state_id) => {
                out.push(Violation::new(
                    "inconsistent county",
                    format!(
                        "row {row}: county {} maps to stratum {}/state {}, earlier rows say {}/{}",
                        r.county_id, r.stratum_id, r.state_id, prev.0, prev.1
                    ),
                ));
            }
            _ => {}
        }
        match stratum_map.insert(r.stratum_id, r.mega_stratum_id) {
            Some(prev) if prev != r.mega_stratum_id => {
                out.push(Violation::new(
                    "inconsistent stratum",
                    format!(
                        "row {row}: stratum {} maps to mega-stratum {}, earlier rows say {}",
                        r.stratum_id, r.mega_stratum_id, prev
                    ),
                ));
            }
            _ => {}
        }
    }
    out
}

/// One unsampled county with resolved dataset indices where they exist.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCounty<T: Scalar> {
    pub id: u64,
    pub stratum_id: u64,
    pub state_id: u64,
    /// Index into the dataset's strata when this stratum was sampled; `None`
    /// means the stratum effect must be drawn fresh.
    pub sampled_stratum: Option<usize>,
    /// Index into the dataset's mega-strata (always required: the stratum
    /// variance is mega-stratum specific).
    pub mega: usize,
    pub cells: Vec<TargetCell<T>>,
}

/// One unsampled cell: domain (0-based), population, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCell<T: Scalar> {
    pub domain: usize,
    pub n_pop: u64,
    pub x: DVector<T>,
}

/// Unsampled counties to impute, resolved against a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTarget<T: Scalar> {
    counties: Vec<TargetCounty<T>>,
}

impl<T: Scalar> PredictionTarget<T> {
    /// Resolves target rows against the dataset they extend. Target counties
    /// must be disjoint from sampled counties and may introduce new strata
    /// and states, but every mega-stratum must exist in the dataset.
    pub fn resolve(rows: &[TargetRow<T>], data: &Dataset<T>) -> Result<Self> {
        let mut out = Vec::new();
        let mut stratum_map: std::collections::BTreeMap<u64, u64> = data
            .strata()
            .iter()
            .map(|s| (s.id, data.megas()[s.mega]))
            .collect();
        let mut county_map: std::collections::BTreeMap<u64, (u64, u64)> = Default::default();
        let mut seen = std::collections::BTreeSet::new();
        for (idx, r) in rows.iter().enumerate() {
            let row = idx + 1;
            if r.domain_id == 0 || r.domain_id > data.n_domains() {
                out.push(Violation::new(
                    "domain out of range",
                    format!("target row {row}: domain {} with {} domains", r.domain_id, data.n_domains()),
                ));
            }
            if r.x.len() != data.p() {
                out.push(Violation::new(
                    "covariate length",
                    format!("target row {row}: {} covariates, dataset has {}", r.x.len(), data.p()),
                ));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new("nonfinite covariate", format!("target row {row}")));
            }
            if data.county_index(r.county_id).is_some() {
                out.push(Violation::new(
                    "target county sampled",
                    format!("target row {row}: county {} is already in the dataset", r.county_id),
                ));
            }
            if data.mega_index(r.mega_stratum_id).is_none() {
                out.push(Violation::new(
                    "unknown mega-stratum",
                    format!("target row {row}: mega-stratum {} not in dataset", r.mega_stratum_id),
                ));
            }
            if !seen.insert((r.county_id, r.domain_id)) {
                out.push(Violation::new(
                    "duplicate cell",
                    format!("target row {row}: county {} domain {}", r.county_id, r.domain_id),
                ));
            }
            match stratum_map.insert(r.stratum_id, r.mega_stratum_id) {
                Some(prev) if prev != r.mega_stratum_id => {
                    out.push(Violation::new(
                        "inconsistent stratum",
                        format!(
                            "target row {row}: stratum {} maps to mega-stratum {}, elsewhere {}",
                            r.stratum_id, r.mega_stratum_id, prev
                        ),
                    ));
                }
                _ => {}
            }
            match county_map.insert(r.county_id, (r.stratum_id, r.state_id)) {
                Some(prev) if prev != (r.stratum_id, r.state_id) => {
                    out.push(Violation::new(
                        "inconsistent county",
                        format!(
                            "target row {row}: county {} maps to stratum {}/state {}, earlier rows say {}/{}",
                            r.county_id, r.stratum_id, r.state_id, prev.0, prev.1
                        ),
                    ));
                }
                _ => {}
            }
        }
        if !out.is_empty() {
            return Err(Error::Validation(out));
        }

        let mut by_county: std::collections::BTreeMap<u64, TargetCounty<T>> = Default::default();
        for r in rows {
            let entry = by_county.entry(r.county_id).or_insert_with(|| TargetCounty {
                id: r.county_id,
                stratum_id: r.stratum_id,
                state_id: r.state_id,
                sampled_stratum: data.stratum_index(r.stratum_id),
                mega: data.mega_index(r.mega_stratum_id).unwrap(),
                cells: Vec::new(),
            });
            entry.cells.push(TargetCell {
                domain: r.domain_id - 1,
                n_pop: r.n_pop,
                x: DVector::from_vec(r.x.clone()),
            });
        }
        let mut counties: Vec<TargetCounty<T>> = by_county.into_values().collect();
        for c in &mut counties {
            c.cells.sort_by_key(|cell| cell.domain);
        }
        Ok(Self { counties })
    }

    pub fn empty() -> Self {
        Self { counties: Vec::new() }
    }

    pub fn counties(&self) -> &[TargetCounty<T>] {
        &self.counties
    }

    pub fn is_empty(&self) -> bool {
        self.counties.is_empty()
    }

    /// Serializes back to wire rows, sorted by (county id, domain id).
    pub fn to_rows(&self, data: &Dataset<T>) -> Vec<TargetRow<T>> {
        self.counties
            .iter()
            .flat_map(|c| {
                c.cells.iter().map(move |cell| TargetRow {
                    county_id: c.id,
                    stratum_id: c.stratum_id,
                    mega_stratum_id: data.megas()[c.mega],
                    state_id: c.state_id,
                    domain_id: cell.domain + 1,
                    n_pop: cell.n_pop,
                    x: cell.x.iter().copied().collect(),
                })
            })
            .collect()
    }
}
