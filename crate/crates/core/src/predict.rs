//! Posterior prediction for unsampled counties, finite-population totals,
//! state aggregation, and the baseline estimators.
//!
//! Per saved posterior draw: each target county receives cluster parameters
//! by extending the urn one seat at a time, a county effect from those
//! parameters, and a stratum effect (the sampled stratum's current value, or
//! a fresh variance-matched draw for strata outside the sample). Success
//! probabilities then feed binomial total simulation for every county, and
//! the totals are added up exactly within states.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;

use crate::config::HyperConfig;
use crate::data::{Dataset, PredictionTarget};
use crate::error::{Error, Result};
use crate::kernels::{expit, RngStream};
use crate::likelihood::linear_predictor;
use crate::sampler::{
    quantile_sorted, run_chain_with, ChainMode, ChainOutput, Mutation, SavedDraw,
};
use crate::scalar::Scalar;
use crate::state::{Atom, BaseMeasure, ClusterState, ModelState};

/// One state's simulated total in one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateTotal {
    pub state_id: u64,
    pub y: u64,
    pub n_pop: u64,
}

impl StateTotal {
    /// The total as a percentage of the state population.
    pub fn percentage<T: Scalar>(&self) -> T {
        if self.n_pop == 0 {
            T::zero()
        } else {
            T::of(100.0) * T::of(self.y as f64) / T::of(self.n_pop as f64)
        }
    }
}

/// Per-state totals for one posterior draw, in ascending state-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TotalDraw {
    pub states: Vec<StateTotal>,
}

impl TotalDraw {
    pub fn grand_total(&self) -> u64 {
        self.states.iter().map(|s| s.y).sum()
    }

    pub fn grand_population(&self) -> u64 {
        self.states.iter().map(|s| s.n_pop).sum()
    }
}

/// One simulated (county, domain) cell on its way into a state sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellTotal {
    pub county_id: u64,
    pub state_id: u64,
    pub n_pop: u64,
    pub y: u64,
}

/// A target county's imputed effects and success probabilities under one
/// posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedCounty<T: Scalar> {
    pub county_id: u64,
    pub state_id: u64,
    pub beta: DVector<T>,
    pub nu: T,
    /// (domain, population, success probability) per target cell.
    pub cells: Vec<(usize, u64, T)>,
}

/// Extends the urn by one seat: joins an existing cluster with probability
/// size/(alpha + total seats), or opens a new one from the base measure with
/// probability alpha/(alpha + total seats). The seat is recorded, so calling
/// this repeatedly walks the exchangeable sequence forward.
pub fn polya_urn_extend<T: Scalar, R: Rng>(
    clusters: &mut ClusterState<T>,
    alpha: T,
    base: &BaseMeasure<T>,
    rng: &mut R,
) -> Result<Atom<T>> {
    let total = T::of(clusters.total_mass() as f64);
    let target = T::uniform_open01(rng) * (alpha + total);
    let mut acc = T::zero();
    let ids: Vec<_> = clusters.clusters().map(|(id, c)| (id, c.size)).collect();
    for (id, size) in ids {
        acc += T::of(size as f64);
        if target <= acc {
            clusters.urn_join(id);
            return Ok(clusters.cluster(id).atom.clone());
        }
    }
    let atom = base.draw_atom(rng)?;
    clusters.urn_new(atom.clone());
    Ok(atom)
}

/// Imputes effects and success probabilities for every target county under
/// one posterior state. The urn is extended sequentially across counties;
/// unsampled strata that appear in several target counties share one fresh
/// effect, since the effect belongs to the stratum.
pub fn impute_unsampled<T: Scalar, R: Rng>(
    state: &ModelState<T>,
    targets: &PredictionTarget<T>,
    rng: &mut R,
) -> Result<Vec<ImputedCounty<T>>> {
    let mut urn = state.clusters.clone();
    let mut fresh_nu: BTreeMap<u64, T> = BTreeMap::new();
    let mut out = Vec::with_capacity(targets.counties().len());
    for county in targets.counties() {
        let atom = polya_urn_extend(&mut urn, state.alpha, &state.base, rng)?;
        let beta = atom.sample(rng);
        let nu = match county.sampled_stratum {
            Some(s) => state.nu[s],
            None => {
                let sd = state.delta_sq[county.mega].sqrt();
                *fresh_nu
                    .entry(county.stratum_id)
                    .or_insert_with(|| sd * T::std_normal(rng))
            }
        };
        let cells = county
            .cells
            .iter()
            .map(|cell| {
                let eta = cell.x.dot(&state.b) + beta[cell.domain] + nu;
                (cell.domain, cell.n_pop, expit(eta))
            })
            .collect();
        out.push(ImputedCounty {
            county_id: county.id,
            state_id: county.state_id,
            beta,
            nu,
            cells,
        });
    }
    Ok(out)
}

/// Independent Y ~ Binomial(N, p) per cell.
pub fn simulate_totals<T: Scalar, R: Rng>(
    p: &[T],
    n_pop: &[u64],
    rng: &mut R,
) -> Result<Vec<u64>> {
    if p.len() != n_pop.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), actual: n_pop.len() });
    }
    p.iter()
        .zip(n_pop)
        .map(|(&pi, &ni)| {
            if !(pi >= T::zero() && pi <= T::one()) {
                return Err(Error::InvalidParameter(format!(
                    "success probability {pi} outside [0, 1]"
                )));
            }
            Ok(T::binomial_draw(ni, pi, rng))
        })
        .collect()
}

/// Sorted, deduplicated union of the states seen in the sample and in the
/// prediction targets.
pub fn state_universe<T: Scalar>(data: &Dataset<T>, targets: &PredictionTarget<T>) -> Vec<u64> {
    let mut ids: Vec<u64> = data.states().to_vec();
    ids.extend(targets.counties().iter().map(|c| c.state_id));
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Exact integer state sums over an ascending state universe.
pub fn aggregate_states(cells: &[CellTotal], universe: &[u64]) -> Result<TotalDraw> {
    let mut states: Vec<StateTotal> = universe
        .iter()
        .map(|&state_id| StateTotal { state_id, y: 0, n_pop: 0 })
        .collect();
    for cell in cells {
        let idx = universe
            .binary_search(&cell.state_id)
            .map_err(|_| Error::UnmappedCounty(cell.county_id))?;
        states[idx].y += cell.y;
        states[idx].n_pop += cell.n_pop;
    }
    debug_assert!(states.iter().all(|s| s.y <= s.n_pop));
    Ok(TotalDraw { states })
}

/// Totals for one posterior draw: imputes targets, simulates every county's
/// cells unconditionally, and aggregates within states.
pub fn totals_for_draw<T: Scalar, R: Rng>(
    state: &ModelState<T>,
    data: &Dataset<T>,
    targets: &PredictionTarget<T>,
    universe: &[u64],
    rng: &mut R,
) -> Result<TotalDraw> {
    let mut cells: Vec<CellTotal> =
        Vec::with_capacity(data.cells().len() + targets.counties().len());
    let mut p = Vec::with_capacity(cells.capacity());
    for cell in data.cells() {
        let county = data.county(cell.county);
        cells.push(CellTotal {
            county_id: county.id,
            state_id: data.states()[county.state],
            n_pop: cell.n_pop,
            y: 0,
        });
        p.push(expit(linear_predictor(state, data, cell)));
    }
    for county in impute_unsampled(state, targets, rng)? {
        for (_, n_pop, prob) in county.cells {
            cells.push(CellTotal {
                county_id: county.county_id,
                state_id: county.state_id,
                n_pop,
                y: 0,
            });
            p.push(prob);
        }
    }
    let n_pop: Vec<u64> = cells.iter().map(|c| c.n_pop).collect();
    let y = simulate_totals(&p, &n_pop, rng)?;
    for (cell, yi) in cells.iter_mut().zip(y) {
        cell.y = yi;
    }
    aggregate_states(&cells, universe)
}

/// Totals for every saved draw. Draw t uses sub-stream t, so the result does
/// not depend on evaluation order.
pub fn predict_totals<T: Scalar>(
    output: &ChainOutput<T>,
    data: &Dataset<T>,
    targets: &PredictionTarget<T>,
    stream: &RngStream,
) -> Result<Vec<TotalDraw>> {
    let universe = state_universe(data, targets);
    output
        .draws
        .iter()
        .enumerate()
        .map(|(t, draw): (usize, &SavedDraw<T>)| {
            let mut rng = stream.substream(t as u64).rng();
            totals_for_draw(&draw.state, data, targets, &universe, &mut rng)
        })
        .collect()
}

/// Posterior summary of one state's percentage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSummary<T: Scalar> {
    pub state_id: u64,
    pub n_pop: u64,
    pub mean_pct: T,
    pub sd_pct: T,
    pub q025_pct: T,
    pub median_pct: T,
    pub q975_pct: T,
}

/// Mean, sample sd, and quantiles of the per-draw percentages, per state.
/// Requires at least two draws (the sd is the n-1 sample estimate).
pub fn summarize_totals<T: Scalar>(draws: &[TotalDraw]) -> Result<Vec<StateSummary<T>>> {
    if draws.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 total draws to summarize, got {}",
            draws.len()
        )));
    }
    let first = &draws[0].states;
    for draw in draws {
        if draw.states.len() != first.len()
            || draw
                .states
                .iter()
                .zip(first)
                .any(|(a, b)| a.state_id != b.state_id || a.n_pop != b.n_pop)
        {
            return Err(Error::InvalidParameter(
                "total draws disagree on the state universe".into(),
            ));
        }
    }
    let n = draws.len();
    let mut out = Vec::with_capacity(first.len());
    for (idx, proto) in first.iter().enumerate() {
        let mut pcts: Vec<T> = draws.iter().map(|d| d.states[idx].percentage()).collect();
        pcts.sort_by(|a, b| a.partial_cmp(b).expect("finite percentage"));
        let mean = pcts.iter().copied().sum::<T>() / T::of(n as f64);
        let ss: T = pcts.iter().map(|&x| (x - mean) * (x - mean)).sum();
        let sd = (ss / T::of((n - 1) as f64)).sqrt();
        out.push(StateSummary {
            state_id: proto.state_id,
            n_pop: proto.n_pop,
            mean_pct: mean,
            sd_pct: sd,
            q025_pct: quantile_sorted(&pcts, 0.025),
            median_pct: quantile_sorted(&pcts, 0.5),
            q975_pct: quantile_sorted(&pcts, 0.975),
        });
    }
    Ok(out)
}

/// A baseline point estimate of one state's percentage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate<T: Scalar> {
    pub state_id: u64,
    pub pct: T,
}

/// Synthetic estimator: national per-domain rates applied to each state's
/// population mix, over sampled and target counties alike.
/// rate_d = sum_i y_id / sum_i n_id; state percentage =
/// 100 * sum_cells N_cell * rate_domain(cell) / N_state.
pub fn synthetic_estimate<T: Scalar>(
    data: &Dataset<T>,
    targets: &PredictionTarget<T>,
) -> Result<Vec<StateEstimate<T>>> {
    let d = data.n_domains();
    let mut y_d = vec![0u64; d];
    let mut n_d = vec![0u64; d];
    for cell in data.cells() {
        y_d[cell.domain] += cell.y;
        n_d[cell.domain] += cell.n;
    }
    let mut rate = vec![T::zero(); d];
    for dom in 0..d {
        if n_d[dom] == 0 {
            return Err(Error::DomainError(format!(
                "domain {} has no national sample, synthetic rate undefined",
                dom + 1
            )));
        }
        rate[dom] = T::of(y_d[dom] as f64) / T::of(n_d[dom] as f64);
    }

    let universe = state_universe(data, targets);
    let mut expected = vec![T::zero(); universe.len()];
    let mut n_pop = vec![0u64; universe.len()];
    let mut add = |state_id: u64, domain: usize, pop: u64| {
        let idx = universe.binary_search(&state_id).expect("state in universe");
        expected[idx] += rate[domain] * T::of(pop as f64);
        n_pop[idx] += pop;
    };
    for cell in data.cells() {
        add(data.states()[data.county(cell.county).state], cell.domain, cell.n_pop);
    }
    for county in targets.counties() {
        for cell in &county.cells {
            add(county.state_id, cell.domain, cell.n_pop);
        }
    }
    universe
        .iter()
        .zip(expected.iter().zip(&n_pop))
        .map(|(&state_id, (&e, &pop))| {
            if pop == 0 {
                return Err(Error::DomainError(format!(
                    "state {state_id} has zero population"
                )));
            }
            Ok(StateEstimate { state_id, pct: T::of(100.0) * e / T::of(pop as f64) })
        })
        .collect()
}

/// Direct sample average per state with its binomial standard error, both as
/// percentages. `estimate` is `None` for states with no sampled trials, as
/// happens for states present only through prediction targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleAverage<T: Scalar> {
    pub state_id: u64,
    /// (percentage, binomial standard error as a percentage).
    pub estimate: Option<(T, T)>,
}

pub fn sample_average_estimate<T: Scalar>(
    data: &Dataset<T>,
    universe: &[u64],
) -> Vec<SampleAverage<T>> {
    let mut y = vec![0u64; universe.len()];
    let mut n = vec![0u64; universe.len()];
    for cell in data.cells() {
        let state_id = data.states()[data.county(cell.county).state];
        if let Ok(idx) = universe.binary_search(&state_id) {
            y[idx] += cell.y;
            n[idx] += cell.n;
        }
    }
    universe
        .iter()
        .enumerate()
        .map(|(idx, &state_id)| SampleAverage {
            state_id,
            estimate: (n[idx] > 0).then(|| {
                let p = T::of(y[idx] as f64) / T::of(n[idx] as f64);
                let se = (p * (T::one() - p) / T::of(n[idx] as f64)).sqrt();
                (T::of(100.0) * p, T::of(100.0) * se)
            }),
        })
        .collect()
}

/// Fits the single-cluster (parametric) variant of the model: the identical
/// chain with the reassignment and total-mass steps disabled, so all
/// counties share one normal drawn from the base measure's conditionals.
pub fn parametric_fit<T: Scalar>(
    data: &Dataset<T>,
    config: &HyperConfig<T>,
) -> Result<ChainOutput<T>> {
    run_chain_with(
        data,
        config,
        &RngStream::new(config.seed, 0),
        ChainMode::SingleCluster,
        Mutation::None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CellRow, TargetRow};
    use crate::state::ClusterState;
    use nalgebra::{dmatrix, dvector};

    fn atom(mu: f64) -> Atom<f64> {
        Atom::new(dvector![mu], dmatrix![1.0]).unwrap()
    }

    fn base1() -> BaseMeasure<f64> {
        BaseMeasure::new(dvector![0.0], dmatrix![1.0], dmatrix![1.0], 4.0).unwrap()
    }

    #[test]
    fn urn_join_probability_matches_eq7() {
        // one existing seat, alpha = 1: P(join) = 1/2
        let base = base1();
        let mut rng = RngStream::new(3, 1).rng();
        let n = 100_000;
        let mut joins = 0;
        for _ in 0..n {
            let mut urn = ClusterState::single_cluster(1, atom(5.0));
            let picked = polya_urn_extend(&mut urn, 1.0, &base, &mut rng).unwrap();
            assert_eq!(urn.total_mass(), 2);
            if urn.k() == 1 {
                joins += 1;
                assert_eq!(picked.mu()[0], 5.0);
            }
        }
        let freq = joins as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "join freq {freq}");
    }

    #[test]
    fn urn_new_cluster_probability_with_two_seats() {
        // two existing seats, alpha = 2: P(new) = 2/4 = 1/2
        let base = base1();
        let mut rng = RngStream::new(4, 1).rng();
        let n = 100_000;
        let mut news = 0;
        for _ in 0..n {
            let mut urn = ClusterState::single_cluster(2, atom(0.0));
            polya_urn_extend(&mut urn, 2.0, &base, &mut rng).unwrap();
            if urn.k() == 2 {
                news += 1;
            }
        }
        let freq = news as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "new-cluster freq {freq}");
    }

    fn rows_with_states() -> Vec<CellRow<f64>> {
        // 2 sampled counties in 2 states; 1 stratum, 1 mega, 1 domain, p=1
        (0..2u64)
            .map(|county| CellRow {
                county_id: county + 1,
                stratum_id: 1,
                mega_stratum_id: 1,
                state_id: county + 1,
                domain_id: 1,
                y: 10,
                n: 40,
                n_pop: 200,
                x: vec![1.0],
            })
            .collect()
    }

    fn target_rows() -> Vec<TargetRow<f64>> {
        vec![
            // unsampled county in the sampled stratum, existing state
            TargetRow {
                county_id: 3,
                stratum_id: 1,
                mega_stratum_id: 1,
                state_id: 2,
                domain_id: 1,
                n_pop: 100,
                x: vec![1.0],
            },
            // unsampled county in a new stratum and a new state
            TargetRow {
                county_id: 4,
                stratum_id: 9,
                mega_stratum_id: 1,
                state_id: 7,
                domain_id: 1,
                n_pop: 150,
                x: vec![1.0],
            },
            // second county sharing the new stratum 9
            TargetRow {
                county_id: 5,
                stratum_id: 9,
                mega_stratum_id: 1,
                state_id: 7,
                domain_id: 1,
                n_pop: 50,
                x: vec![1.0],
            },
        ]
    }

    fn fixture() -> (Dataset<f64>, PredictionTarget<f64>, ModelState<f64>) {
        let data = Dataset::from_rows(&rows_with_states()).unwrap();
        let targets = PredictionTarget::resolve(&target_rows(), &data).unwrap();
        let state = ModelState {
            b: dvector![0.0],
            beta: vec![dvector![0.0]; 2],
            nu: vec![0.25],
            delta_sq: vec![0.5],
            clusters: ClusterState::single_cluster(2, atom(0.0)),
            base: base1(),
            alpha: 1.0,
        };
        (data, targets, state)
    }

    #[test]
    fn sampled_stratum_nu_is_reused_and_new_stratum_nu_is_shared() {
        let (_, targets, state) = fixture();
        let mut rng = RngStream::new(8, 2).rng();
        let imputed = impute_unsampled(&state, &targets, &mut rng).unwrap();
        assert_eq!(imputed.len(), 3);
        assert_eq!(imputed[0].nu, 0.25, "sampled stratum must reuse nu exactly");
        assert_eq!(
            imputed[1].nu, imputed[2].nu,
            "counties in one unsampled stratum share its fresh effect"
        );
        assert_ne!(imputed[1].nu, 0.25);
    }

    #[test]
    fn all_zero_effects_give_half_probability() {
        let (_, targets, mut state) = fixture();
        state.nu = vec![0.0];
        // zero-variance-free check: force beta draw to zero via a point atom
        let tight = Atom::new(dvector![0.0], dmatrix![1e-30]).unwrap();
        state.clusters = ClusterState::single_cluster(2, tight);
        state.alpha = 1e-12;
        let mut rng = RngStream::new(9, 2).rng();
        let imputed = impute_unsampled(&state, &targets, &mut rng).unwrap();
        // county 3: sampled stratum (nu = 0), atom at 0 with negligible
        // spread, b = 0, x = 1 -> p = expit(0) = 0.5
        let (_, _, p) = imputed[0].cells[0];
        assert!((p - 0.5).abs() < 1e-6, "p = {p}");
    }

    #[test]
    fn simulated_totals_hit_binomial_edges_and_mean() {
        let mut rng = RngStream::new(10, 2).rng();
        let y = simulate_totals(&[0.0f64, 1.0, 0.37], &[0, 80, 50], &mut rng).unwrap();
        assert_eq!(y[0], 0);
        assert_eq!(y[1], 80);
        assert!(y[2] <= 50);

        let n = 100_000;
        let mut acc = 0u64;
        for _ in 0..n {
            acc += simulate_totals(&[0.37f64], &[50], &mut rng).unwrap()[0];
        }
        let mean = acc as f64 / n as f64 / 50.0;
        let se = (0.37 * 0.63 / (n as f64 * 50.0)).sqrt();
        assert!((mean - 0.37).abs() < 3.0 * se, "mean rate {mean}");

        assert!(simulate_totals(&[1.5f64], &[10], &mut rng).is_err());
        assert!(simulate_totals(&[0.5f64], &[10, 20], &mut rng).is_err());
    }

    #[test]
    fn aggregation_conserves_totals_and_flags_unmapped() {
        let universe = vec![1u64, 2, 7];
        let cells = vec![
            CellTotal { county_id: 1, state_id: 1, n_pop: 200, y: 30 },
            CellTotal { county_id: 2, state_id: 2, n_pop: 200, y: 40 },
            CellTotal { county_id: 3, state_id: 2, n_pop: 100, y: 10 },
            CellTotal { county_id: 4, state_id: 7, n_pop: 150, y: 0 },
        ];
        let draw = aggregate_states(&cells, &universe).unwrap();
        assert_eq!(draw.grand_total(), 80);
        assert_eq!(draw.states[0], StateTotal { state_id: 1, y: 30, n_pop: 200 });
        assert_eq!(draw.states[1], StateTotal { state_id: 2, y: 50, n_pop: 300 });
        assert_eq!(draw.states[2], StateTotal { state_id: 7, y: 0, n_pop: 150 });

        let bad = vec![CellTotal { county_id: 99, state_id: 5, n_pop: 10, y: 1 }];
        assert!(matches!(
            aggregate_states(&bad, &universe),
            Err(Error::UnmappedCounty(99))
        ));
    }

    #[test]
    fn totals_per_draw_conserve_and_respect_bounds() {
        let (data, targets, state) = fixture();
        let universe = state_universe(&data, &targets);
        assert_eq!(universe, vec![1, 2, 7]);
        let mut rng = RngStream::new(11, 2).rng();
        for _ in 0..50 {
            let draw = totals_for_draw(&state, &data, &targets, &universe, &mut rng).unwrap();
            assert_eq!(draw.grand_population(), 200 + 200 + 100 + 150 + 50);
            for s in &draw.states {
                assert!(s.y <= s.n_pop);
            }
        }
    }

    #[test]
    fn summaries_match_hand_computation() {
        let mk = |pcts: [u64; 2]| TotalDraw {
            states: vec![
                StateTotal { state_id: 1, y: pcts[0], n_pop: 100 },
                StateTotal { state_id: 2, y: pcts[1], n_pop: 100 },
            ],
        };
        let draws = vec![mk([40, 10]), mk([60, 10])];
        let summary = summarize_totals::<f64>(&draws).unwrap();
        assert_eq!(summary[0].state_id, 1);
        assert!((summary[0].mean_pct - 50.0).abs() < 1e-12);
        assert!((summary[0].sd_pct - 200.0f64.sqrt()).abs() < 1e-12);
        assert!((summary[1].sd_pct - 0.0).abs() < 1e-12, "constant draws have sd 0");
        assert!((summary[1].mean_pct - 10.0).abs() < 1e-12);
        assert!(summarize_totals::<f64>(&draws[..1]).is_err());
    }

    #[test]
    fn synthetic_estimator_matches_direct_recomputation() {
        let (data, targets, _) = fixture();
        // national rate: (10+10)/(40+40) = 0.25 in the single domain, so
        // every state estimate is 25%
        let est = synthetic_estimate(&data, &targets).unwrap();
        assert_eq!(est.len(), 3);
        for e in &est {
            assert!((e.pct - 25.0).abs() < 1e-12, "state {} pct {}", e.state_id, e.pct);
        }
    }

    #[test]
    fn synthetic_estimator_requires_sampled_domains() {
        // domain 2 exists in the data but has n = 0 everywhere
        let mut rows = rows_with_states();
        for r in &mut rows {
            let mut empty = r.clone();
            empty.domain_id = 2;
            empty.y = 0;
            empty.n = 0;
            rows.push(empty);
            break;
        }
        let data = Dataset::from_rows(&rows).unwrap();
        assert!(synthetic_estimate(&data, &PredictionTarget::empty()).is_err());
    }

    #[test]
    fn sample_average_is_absent_for_unsampled_states() {
        let (data, targets, _) = fixture();
        let universe = state_universe(&data, &targets);
        let avg = sample_average_estimate::<f64>(&data, &universe);
        assert_eq!(avg.len(), 3);
        let (pct, se) = avg[0].estimate.unwrap();
        assert!((pct - 25.0).abs() < 1e-12);
        let expect_se = 100.0 * (0.25f64 * 0.75 / 40.0).sqrt();
        assert!((se - expect_se).abs() < 1e-12);
        assert!(avg[2].estimate.is_none(), "state 7 has no sample");
    }

    #[test]
    fn urn_partition_law_for_three_counties() {
        // From one county, extend twice at alpha = 1 (seats 2 and 3):
        // P(all together) = 1/2 * 2/3 = 1/3; P(all apart) = 1/2 * 1/3 = 1/6.
        let base = base1();
        let mut rng = RngStream::new(12, 2).rng();
        let n = 100_000;
        let (mut together, mut apart) = (0, 0);
        for _ in 0..n {
            let mut urn = ClusterState::single_cluster(1, atom(0.0));
            polya_urn_extend(&mut urn, 1.0, &base, &mut rng).unwrap();
            polya_urn_extend(&mut urn, 1.0, &base, &mut rng).unwrap();
            match urn.k() {
                1 => together += 1,
                3 => apart += 1,
                _ => {}
            }
        }
        let f_tog = together as f64 / n as f64;
        let f_apt = apart as f64 / n as f64;
        let se_tog = (f_tog * (1.0 - f_tog) / n as f64).sqrt();
        let se_apt = (f_apt * (1.0 - f_apt) / n as f64).sqrt();
        assert!((f_tog - 1.0 / 3.0).abs() < 3.0 * se_tog, "together {f_tog}");
        assert!((f_apt - 1.0 / 6.0).abs() < 3.0 * se_apt, "apart {f_apt}");
    }
}
