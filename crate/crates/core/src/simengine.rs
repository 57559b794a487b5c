//! Deterministic Monte Carlo engine for component graphs.
//!
//! Each replication draws one independent stress value per processor per
//! sample and evaluates the graph in topological order: sources emit their
//! constant level, processors apply [`step_component`] to the minimum of
//! their inputs. Every (experiment point, replication, component) triple
//! owns a counter-derived ChaCha8 substream, so draws never depend on
//! evaluation order, thread count, or the parameters of other experiment
//! points. Normal variates come from `rand_distr::Normal`, a ziggurat
//! rejection sampler (exact distribution, not an approximate sum).
//!
//! Replications run in parallel under rayon; per-replication accumulators
//! are merged in replication order, so summaries are bit-identical for any
//! thread count. Pooled statistics treat all replications' samples as one
//! population, which they are (nothing varies across replications but the
//! substream index).
//!
//! Performance values are not clamped by default; the optional floor-zero
//! mode clamps every recorded per-sample value at 0 for presentation, at the
//! cost of agreement with the unclamped analytic model.

use crate::propagation::{ComponentId, ComponentKind, GraphError, SystemGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_REPLICATIONS: usize = 30;
pub const DEFAULT_SAMPLES_PER_REPLICATION: usize = 2000;

/// Errors from experiment validation and summary computation.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("replications and samples per replication must both be at least 1")]
    EmptySpec,
    #[error("experiment needs a nonempty b_values list")]
    NoBValues,
    #[error("experiment kind does not match the requested operation (need {0})")]
    WrongKind(&'static str),
    #[error("location experiment needs exactly two processors with one feeding the other ({0})")]
    NoChain(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot summarize an empty sample set")]
    EmptySamples,
}

/// Per-sample response of one component: gain inside tolerance, linear
/// degradation by the overshoot outside.
pub fn step_component(p_in: f64, b: f64, t_hi: f64, x: f64) -> f64 {
    if x <= t_hi {
        p_in * (1.0 + b)
    } else {
        p_in * (1.0 - b * (x - t_hi))
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based substream derivation: absorbing each index through the
/// splitmix64 finalizer gives independent 64-bit seeds for any combination
/// of experiment point, replication, and component ordinal.
pub fn substream_seed(master: u64, experiment: u64, replication: u64, component: u64) -> u64 {
    let mut h = mix64(master.wrapping_add(GOLDEN));
    h = mix64(h ^ experiment.wrapping_mul(GOLDEN));
    h = mix64(h ^ replication.wrapping_mul(GOLDEN));
    mix64(h ^ component.wrapping_mul(GOLDEN))
}

/// What an experiment varies.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    /// One run of the graph as given; traces are recorded.
    Single,
    /// `target`'s brittleness walks through `b_values`, one derived seed per value.
    BSweep {
        target: ComponentId,
        b_values: Vec<f64>,
    },
    /// Two-processor chain: sweep the first processor's b with the second at
    /// `fixed_b`, then swap roles, under identical draws (paired).
    Location { b_values: Vec<f64>, fixed_b: f64 },
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub graph: SystemGraph,
    pub kind: ExperimentKind,
    pub replications: usize,
    pub samples_per_replication: usize,
    pub master_seed: u64,
    /// Clamp every recorded per-sample performance at 0.
    pub floor_zero: bool,
}

impl ExperimentSpec {
    pub fn new(graph: SystemGraph, kind: ExperimentKind) -> Self {
        Self {
            graph,
            kind,
            replications: DEFAULT_REPLICATIONS,
            samples_per_replication: DEFAULT_SAMPLES_PER_REPLICATION,
            master_seed: 0,
            floor_zero: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.replications < 1 || self.samples_per_replication < 1 {
            return Err(SimError::EmptySpec);
        }
        match &self.kind {
            ExperimentKind::Single => {}
            ExperimentKind::BSweep { b_values, .. }
            | ExperimentKind::Location { b_values, .. } => {
                if b_values.is_empty() {
                    return Err(SimError::NoBValues);
                }
            }
        }
        Ok(())
    }
}

/// Sample count, mean, unbiased variance, and a normal-approximation 95%
/// confidence halfwidth (absent below two samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub ci95_halfwidth: Option<f64>,
}

/// Mean and 95% CI of a sample set.
pub fn summarize(samples: &[f64]) -> Result<SummaryStats, SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptySamples);
    }
    let mut acc = Welford::default();
    for &x in samples {
        acc.push(x);
    }
    Ok(acc.stats())
}

/// Streaming mean/variance accumulator with an order-preserving merge.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * (other.n as f64 / n as f64);
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        Welford { n, mean, m2 }
    }

    fn stats(&self) -> SummaryStats {
        let variance = if self.n >= 2 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        let ci95_halfwidth = if self.n >= 2 {
            Some(1.96 * (variance / self.n as f64).sqrt())
        } else {
            None
        };
        SummaryStats {
            n: self.n,
            mean: self.mean,
            variance,
            ci95_halfwidth,
        }
    }
}

/// One recorded evaluation step; stress is absent for sources.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub replication: usize,
    pub sample: usize,
    pub component: ComponentId,
    pub stress: Option<f64>,
    pub perf: f64,
}

/// Traces plus per-component pooled statistics, components in declaration order.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub traces: Vec<TraceRow>,
    pub stats: Vec<(ComponentId, SummaryStats)>,
}

/// Per-processor samplers for one replication, indexed by component ordinal.
fn component_rngs(
    graph: &SystemGraph,
    master: u64,
    experiment: u64,
    replication: u64,
) -> Vec<Option<(ChaCha8Rng, Normal<f64>)>> {
    graph
        .components()
        .iter()
        .enumerate()
        .map(|(ordinal, c)| match &c.kind {
            ComponentKind::Source { .. } => None,
            ComponentKind::Processor { stress, .. } => {
                let seed = substream_seed(master, experiment, replication, ordinal as u64);
                let normal = Normal::new(stress.eta(), stress.sigma()).expect("sigma > 0");
                Some((ChaCha8Rng::seed_from_u64(seed), normal))
            }
        })
        .collect()
}

/// Evaluates every component for one stress vector. `xs` holds one draw per
/// processor ordinal; `perfs` is overwritten in place.
fn evaluate_sample(graph: &SystemGraph, xs: &[Option<f64>], floor_zero: bool, perfs: &mut [f64]) {
    for &idx in graph.topo_order() {
        let mut p = match &graph.components()[idx].kind {
            ComponentKind::Source { perf } => *perf,
            ComponentKind::Processor { b, t_hi, .. } => {
                let p_in = graph
                    .resolved_inputs(idx)
                    .iter()
                    .map(|&j| perfs[j])
                    .fold(f64::INFINITY, f64::min);
                step_component(p_in, *b, *t_hi, xs[idx].expect("processor has a draw"))
            }
        };
        if floor_zero {
            p = p.max(0.0);
        }
        perfs[idx] = p;
    }
}

struct ReplicationResult {
    accs: Vec<Welford>,
    traces: Vec<TraceRow>,
}

fn run_replication(
    graph: &SystemGraph,
    spec: &ExperimentSpec,
    experiment: u64,
    replication: usize,
    collect_traces: bool,
) -> ReplicationResult {
    let n = graph.components().len();
    let mut rngs = component_rngs(graph, spec.master_seed, experiment, replication as u64);
    let mut accs = vec![Welford::default(); n];
    let mut traces = Vec::new();
    if collect_traces {
        traces.reserve(spec.samples_per_replication * n);
    }
    let mut xs = vec![None; n];
    let mut perfs = vec![0.0; n];
    for sample in 0..spec.samples_per_replication {
        for (slot, rng) in xs.iter_mut().zip(rngs.iter_mut()) {
            *slot = rng.as_mut().map(|(r, dist)| dist.sample(r));
        }
        evaluate_sample(graph, &xs, spec.floor_zero, &mut perfs);
        for (idx, acc) in accs.iter_mut().enumerate() {
            acc.push(perfs[idx]);
        }
        if collect_traces {
            for (idx, c) in graph.components().iter().enumerate() {
                traces.push(TraceRow {
                    replication,
                    sample,
                    component: c.id.clone(),
                    stress: xs[idx],
                    perf: perfs[idx],
                });
            }
        }
    }
    ReplicationResult { accs, traces }
}

/// Runs all replications of one experiment point (parallel, merge in
/// replication order) and returns per-component accumulators plus traces.
fn run_point(
    graph: &SystemGraph,
    spec: &ExperimentSpec,
    experiment: u64,
    collect_traces: bool,
) -> (Vec<Welford>, Vec<TraceRow>) {
    let per_rep: Vec<ReplicationResult> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(graph, spec, experiment, r, collect_traces))
        .collect();
    let n = graph.components().len();
    let mut accs = vec![Welford::default(); n];
    let mut traces = Vec::new();
    for rep in per_rep {
        for (total, part) in accs.iter_mut().zip(rep.accs) {
            *total = total.merge(part);
        }
        traces.extend(rep.traces);
    }
    (accs, traces)
}

fn stats_rows(graph: &SystemGraph, accs: &[Welford]) -> Vec<(ComponentId, SummaryStats)> {
    graph
        .components()
        .iter()
        .zip(accs)
        .map(|(c, acc)| (c.id.clone(), acc.stats()))
        .collect()
}

/// Simulates the graph as given (experiment point 0) with full traces.
pub fn simulate_graph(spec: &ExperimentSpec) -> Result<SimOutput, SimError> {
    spec.validate()?;
    let (accs, traces) = run_point(&spec.graph, spec, 0, true);
    Ok(SimOutput {
        traces,
        stats: stats_rows(&spec.graph, &accs),
    })
}

/// One component's statistics at one sweep point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub b: f64,
    pub component: ComponentId,
    pub stats: SummaryStats,
}

/// Sweeps the target's brittleness through `b_values`. Each b value is its
/// own experiment point, so editing one value leaves the others' draws alone.
pub fn experiment_bsweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let ExperimentKind::BSweep { target, b_values } = &spec.kind else {
        return Err(SimError::WrongKind("bsweep"));
    };
    let mut rows = Vec::with_capacity(b_values.len() * spec.graph.components().len());
    for (i, &b) in b_values.iter().enumerate() {
        let graph = spec.graph.with_processor_b(target.as_str(), b)?;
        let (accs, _) = run_point(&graph, spec, i as u64, false);
        for (id, stats) in stats_rows(&graph, &accs) {
            rows.push(SweepRow {
                b,
                component: id,
                stats,
            });
        }
    }
    Ok(rows)
}

/// Which chain position carries the swept brittleness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrangement {
    VaryingFirst,
    VaryingSecond,
}

impl Arrangement {
    pub fn label(&self) -> &'static str {
        match self {
            Arrangement::VaryingFirst => "varying_first",
            Arrangement::VaryingSecond => "varying_second",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocationRow {
    pub arrangement: Arrangement,
    pub b: f64,
    pub component: ComponentId,
    pub stats: SummaryStats,
}

/// Paired comparison at one b value: statistics of the per-sample difference
/// (varying-second output minus varying-first output) under shared draws.
#[derive(Debug, Clone)]
pub struct PairedDiff {
    pub b: f64,
    pub stats: SummaryStats,
}

#[derive(Debug, Clone)]
pub struct LocationResult {
    /// All varying-first rows (b ascending, components in declaration
    /// order), then all varying-second rows.
    pub rows: Vec<LocationRow>,
    pub paired_diffs: Vec<PairedDiff>,
}

/// The processor pair the location experiment drives, upstream id first.
pub fn designated_chain(graph: &SystemGraph) -> Result<(ComponentId, ComponentId), SimError> {
    let (first, second) = find_chain(graph)?;
    Ok((
        graph.components()[first].id.clone(),
        graph.components()[second].id.clone(),
    ))
}

/// The unique processor pair (upstream, downstream) of a two-processor
/// chained graph.
fn find_chain(graph: &SystemGraph) -> Result<(usize, usize), SimError> {
    let procs: Vec<usize> = graph
        .components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_processor())
        .map(|(i, _)| i)
        .collect();
    if procs.len() != 2 {
        return Err(SimError::NoChain(format!(
            "graph has {} processors",
            procs.len()
        )));
    }
    let (a, b) = (procs[0], procs[1]);
    if graph.resolved_inputs(b).contains(&a) {
        Ok((a, b))
    } else if graph.resolved_inputs(a).contains(&b) {
        Ok((b, a))
    } else {
        Err(SimError::NoChain("processors are not chained".into()))
    }
}

/// Runs one replication of two same-shaped graphs under shared stress draws
/// and accumulates both plus the per-sample output difference (b − a).
fn run_replication_paired(
    graph_a: &SystemGraph,
    graph_b: &SystemGraph,
    out_idx: usize,
    spec: &ExperimentSpec,
    experiment: u64,
    replication: usize,
) -> (Vec<Welford>, Vec<Welford>, Welford) {
    let n = graph_a.components().len();
    let mut rngs = component_rngs(graph_a, spec.master_seed, experiment, replication as u64);
    let mut accs_a = vec![Welford::default(); n];
    let mut accs_b = vec![Welford::default(); n];
    let mut acc_diff = Welford::default();
    let mut xs = vec![None; n];
    let mut perfs_a = vec![0.0; n];
    let mut perfs_b = vec![0.0; n];
    for _ in 0..spec.samples_per_replication {
        for (slot, rng) in xs.iter_mut().zip(rngs.iter_mut()) {
            *slot = rng.as_mut().map(|(r, dist)| dist.sample(r));
        }
        evaluate_sample(graph_a, &xs, spec.floor_zero, &mut perfs_a);
        evaluate_sample(graph_b, &xs, spec.floor_zero, &mut perfs_b);
        for idx in 0..n {
            accs_a[idx].push(perfs_a[idx]);
            accs_b[idx].push(perfs_b[idx]);
        }
        acc_diff.push(perfs_b[out_idx] - perfs_a[out_idx]);
    }
    (accs_a, accs_b, acc_diff)
}

/// The brittleness-location experiment: one processor of a two-processor
/// chain sweeps through `b_values` while the other holds `fixed_b`, in both
/// arrangements. The arrangement does not enter seed derivation, so the two
/// sides of each b value see identical stress vectors and the paired
/// difference of the first declared output is meaningful per sample.
pub fn experiment_location(spec: &ExperimentSpec) -> Result<LocationResult, SimError> {
    spec.validate()?;
    let ExperimentKind::Location { b_values, fixed_b } = &spec.kind else {
        return Err(SimError::WrongKind("location"));
    };
    let (first, second) = find_chain(&spec.graph)?;
    let first_id = spec.graph.components()[first].id.clone();
    let second_id = spec.graph.components()[second].id.clone();
    let out_idx = spec.graph.output_indices()[0];
    let n = spec.graph.components().len();

    let mut rows_first = Vec::with_capacity(b_values.len() * n);
    let mut rows_second = Vec::with_capacity(b_values.len() * n);
    let mut paired_diffs = Vec::with_capacity(b_values.len());
    for (i, &b) in b_values.iter().enumerate() {
        let graph_a = spec
            .graph
            .with_processor_b(first_id.as_str(), b)?
            .with_processor_b(second_id.as_str(), *fixed_b)?;
        let graph_b = spec
            .graph
            .with_processor_b(first_id.as_str(), *fixed_b)?
            .with_processor_b(second_id.as_str(), b)?;
        let per_rep: Vec<_> = (0..spec.replications)
            .into_par_iter()
            .map(|r| run_replication_paired(&graph_a, &graph_b, out_idx, spec, i as u64, r))
            .collect();
        let mut accs_a = vec![Welford::default(); n];
        let mut accs_b = vec![Welford::default(); n];
        let mut acc_diff = Welford::default();
        for (rep_a, rep_b, rep_diff) in per_rep {
            for idx in 0..n {
                accs_a[idx] = accs_a[idx].merge(rep_a[idx]);
                accs_b[idx] = accs_b[idx].merge(rep_b[idx]);
            }
            acc_diff = acc_diff.merge(rep_diff);
        }
        for (id, stats) in stats_rows(&graph_a, &accs_a) {
            rows_first.push(LocationRow {
                arrangement: Arrangement::VaryingFirst,
                b,
                component: id,
                stats,
            });
        }
        for (id, stats) in stats_rows(&graph_b, &accs_b) {
            rows_second.push(LocationRow {
                arrangement: Arrangement::VaryingSecond,
                b,
                component: id,
                stats,
            });
        }
        paired_diffs.push(PairedDiff {
            b,
            stats: acc_diff.stats(),
        });
    }
    rows_first.extend(rows_second);
    Ok(LocationResult {
        rows: rows_first,
        paired_diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{evaluate_graph_expected, ComponentSpec, StressModel};
    use approx::assert_abs_diff_eq;

    fn bench_stress() -> StressModel {
        StressModel::new(10.0, 3.0).unwrap()
    }

    fn reference_graph(b2: f64) -> SystemGraph {
        let stress = bench_stress();
        SystemGraph::new(
            vec![
                ComponentSpec::source("C1", 1.0),
                ComponentSpec::processor("C2", b2, stress, 11.0, vec!["C1".into()]),
                ComponentSpec::source("C3", 1.0),
                ComponentSpec::processor("C4", 0.3, stress, 11.0, vec!["C2".into(), "C3".into()]),
            ],
            vec!["C4".into()],
        )
        .unwrap()
    }

    fn chain_graph(b1: f64, b2: f64) -> SystemGraph {
        let stress = bench_stress();
        SystemGraph::new(
            vec![
                ComponentSpec::source("S", 1.0),
                ComponentSpec::processor("P1", b1, stress, 11.0, vec!["S".into()]),
                ComponentSpec::source("U", 1.0),
                ComponentSpec::processor("P2", b2, stress, 11.0, vec!["P1".into(), "U".into()]),
            ],
            vec!["P2".into()],
        )
        .unwrap()
    }

    #[test]
    fn step_component_cases() {
        assert_eq!(step_component(1.0, 0.0, 11.0, 25.0), 1.0);
        assert_eq!(step_component(1.0, 0.0, 11.0, 5.0), 1.0);
        assert_eq!(step_component(1.0, 0.5, 11.0, 13.0), 0.0);
        assert_eq!(step_component(1.0, 0.3, 11.0, 11.0), 1.3);
        assert_eq!(step_component(2.0, 0.5, 11.0, 15.0), 2.0 * (1.0 - 0.5 * 4.0));
    }

    #[test]
    fn substream_seeds_differ_across_every_index() {
        let base = substream_seed(42, 0, 0, 0);
        assert_ne!(base, substream_seed(43, 0, 0, 0));
        assert_ne!(base, substream_seed(42, 1, 0, 0));
        assert_ne!(base, substream_seed(42, 0, 1, 0));
        assert_ne!(base, substream_seed(42, 0, 0, 1));
        assert_eq!(base, substream_seed(42, 0, 0, 0));
    }

    #[test]
    fn summarize_small_cases() {
        let s = summarize(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((s.n, s.mean, s.variance), (3, 3.0, 0.0));
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance), (0.5, 0.5));
        assert_abs_diff_eq!(
            s.ci95_halfwidth.unwrap(),
            1.96 * (0.5f64 / 2.0).sqrt(),
            epsilon = 1e-15
        );
        let s = summarize(&[7.0]).unwrap();
        assert_eq!((s.n, s.variance, s.ci95_halfwidth), (1, 0.0, None));
        assert_eq!(summarize(&[]).unwrap_err(), SimError::EmptySamples);
    }

    #[test]
    fn lone_source_has_constant_traces() {
        let g = SystemGraph::new(vec![ComponentSpec::source("S", 1.0)], vec!["S".into()]).unwrap();
        let mut spec = ExperimentSpec::new(g, ExperimentKind::Single);
        spec.replications = 2;
        spec.samples_per_replication = 5;
        let out = simulate_graph(&spec).unwrap();
        assert_eq!(out.traces.len(), 10);
        assert!(out.traces.iter().all(|t| t.perf == 1.0 && t.stress.is_none()));
        let (_, stats) = &out.stats[0];
        assert_eq!((stats.mean, stats.variance, stats.n), (1.0, 0.0, 10));
    }

    #[test]
    fn all_zero_brittleness_passes_the_source_minimum_through() {
        let g = chain_graph(0.0, 0.0);
        let mut spec = ExperimentSpec::new(g, ExperimentKind::Single);
        spec.replications = 2;
        spec.samples_per_replication = 50;
        let out = simulate_graph(&spec).unwrap();
        for t in &out.traces {
            assert_eq!(t.perf, 1.0, "component {} sample {}", t.component, t.sample);
        }
    }

    #[test]
    fn identical_specs_give_bit_identical_output() {
        let spec = ExperimentSpec {
            replications: 3,
            samples_per_replication: 40,
            master_seed: 99,
            ..ExperimentSpec::new(reference_graph(0.5), ExperimentKind::Single)
        };
        let a = simulate_graph(&spec).unwrap();
        let b = simulate_graph(&spec).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn output_is_invariant_under_thread_count() {
        let spec = ExperimentSpec {
            replications: 8,
            samples_per_replication: 100,
            master_seed: 7,
            ..ExperimentSpec::new(reference_graph(0.5), ExperimentKind::Single)
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| simulate_graph(&spec)).unwrap();
        let b = pool4.install(|| simulate_graph(&spec)).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn sample_means_track_the_analytic_expectation() {
        let graph = reference_graph(0.5);
        let expected = evaluate_graph_expected(&graph);
        let spec = ExperimentSpec {
            replications: 10,
            samples_per_replication: 2000,
            master_seed: 2024,
            ..ExperimentSpec::new(graph, ExperimentKind::Single)
        };
        let out = simulate_graph(&spec).unwrap();
        for (id, stats) in &out.stats {
            let want = expected.get(id.as_str()).unwrap();
            let se = (stats.variance / stats.n as f64).sqrt();
            assert!(
                (stats.mean - want).abs() <= 4.0 * se.max(1e-12),
                "{id}: mean {} vs analytic {want} (se {se})",
                stats.mean
            );
        }
    }

    #[test]
    fn bsweep_rows_cover_every_b_and_component_once() {
        let spec = ExperimentSpec {
            replications: 2,
            samples_per_replication: 50,
            ..ExperimentSpec::new(
                reference_graph(0.0),
                ExperimentKind::BSweep {
                    target: "C2".into(),
                    b_values: vec![0.0, 0.4, 0.8],
                },
            )
        };
        let rows = experiment_bsweep(&spec).unwrap();
        assert_eq!(rows.len(), 3 * 4);
        assert_eq!(rows[0].b, 0.0);
        assert_eq!(rows[0].component.as_str(), "C1");
        assert!(rows.iter().all(|r| r.stats.n == 100));
    }

    #[test]
    fn editing_one_b_value_leaves_other_points_untouched() {
        let base = ExperimentSpec {
            replications: 2,
            samples_per_replication: 60,
            ..ExperimentSpec::new(
                reference_graph(0.0),
                ExperimentKind::BSweep {
                    target: "C2".into(),
                    b_values: vec![0.1, 0.5],
                },
            )
        };
        let mut tweaked = base.clone();
        tweaked.kind = ExperimentKind::BSweep {
            target: "C2".into(),
            b_values: vec![0.1, 0.7],
        };
        let rows_a = experiment_bsweep(&base).unwrap();
        let rows_b = experiment_bsweep(&tweaked).unwrap();
        for (a, b) in rows_a.iter().zip(&rows_b).take(4) {
            assert_eq!(a.stats, b.stats, "component {}", a.component);
        }
    }

    #[test]
    fn bsweep_at_b_zero_keeps_the_chain_at_source_level() {
        let spec = ExperimentSpec {
            replications: 2,
            samples_per_replication: 40,
            ..ExperimentSpec::new(
                chain_graph(0.0, 0.0),
                ExperimentKind::BSweep {
                    target: "P1".into(),
                    b_values: vec![0.0],
                },
            )
        };
        let rows = experiment_bsweep(&spec).unwrap();
        for row in rows {
            assert_eq!(row.stats.mean, 1.0, "component {}", row.component);
            assert_eq!(row.stats.variance, 0.0);
        }
    }

    #[test]
    fn location_requires_a_two_processor_chain() {
        let lone = SystemGraph::new(vec![ComponentSpec::source("S", 1.0)], vec!["S".into()]).unwrap();
        let spec = ExperimentSpec::new(
            lone,
            ExperimentKind::Location {
                b_values: vec![0.5],
                fixed_b: 0.5,
            },
        );
        assert!(matches!(
            experiment_location(&spec).unwrap_err(),
            SimError::NoChain(_)
        ));
    }

    #[test]
    fn location_at_the_fixed_b_is_arrangement_symmetric() {
        let spec = ExperimentSpec {
            replications: 3,
            samples_per_replication: 80,
            master_seed: 5,
            ..ExperimentSpec::new(
                chain_graph(0.1, 0.1),
                ExperimentKind::Location {
                    b_values: vec![0.5],
                    fixed_b: 0.5,
                },
            )
        };
        let res = experiment_location(&spec).unwrap();
        let n = 4;
        for i in 0..n {
            let a = &res.rows[i];
            let b = &res.rows[n + i];
            assert_eq!(a.component, b.component);
            assert_eq!(a.stats, b.stats);
        }
        let diff = &res.paired_diffs[0];
        assert_eq!(diff.stats.mean, 0.0);
        assert_eq!(diff.stats.variance, 0.0);
    }

    #[test]
    fn location_favors_the_brittle_component_last() {
        let spec = ExperimentSpec {
            replications: 10,
            samples_per_replication: 2000,
            master_seed: 11,
            ..ExperimentSpec::new(
                chain_graph(0.1, 0.1),
                ExperimentKind::Location {
                    b_values: vec![1.0],
                    fixed_b: 0.5,
                },
            )
        };
        let res = experiment_location(&spec).unwrap();
        let diff = &res.paired_diffs[0];
        let hw = diff.stats.ci95_halfwidth.unwrap();
        assert!(
            diff.stats.mean - hw > 0.0,
            "paired diff {} +- {hw} does not exclude zero",
            diff.stats.mean
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = reference_graph(0.1);
        let mut spec = ExperimentSpec::new(g.clone(), ExperimentKind::Single);
        spec.replications = 0;
        assert_eq!(simulate_graph(&spec).unwrap_err(), SimError::EmptySpec);
        let spec = ExperimentSpec::new(
            g.clone(),
            ExperimentKind::BSweep {
                target: "C2".into(),
                b_values: vec![],
            },
        );
        assert_eq!(experiment_bsweep(&spec).unwrap_err(), SimError::NoBValues);
        let spec = ExperimentSpec::new(
            g,
            ExperimentKind::BSweep {
                target: "C1".into(),
                b_values: vec![0.2],
            },
        );
        assert!(matches!(
            experiment_bsweep(&spec).unwrap_err(),
            SimError::Graph(GraphError::NotAProcessor(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn step_is_monotone_in_p_in(
                p1 in 0.0f64..10.0,
                p2 in 0.0f64..10.0,
                b in 0.0f64..1.0,
                x in 0.0f64..30.0,
            ) {
                let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
                let y_lo = step_component(lo, b, 11.0, x);
                let y_hi = step_component(hi, b, 11.0, x);
                if x <= 11.0 || 1.0 - b * (x - 11.0) >= 0.0 {
                    prop_assert!(y_lo <= y_hi);
                } else {
                    prop_assert!(y_lo >= y_hi);
                }
            }

            #[test]
            fn floor_zero_never_records_negative_values(seed in any::<u64>()) {
                let spec = ExperimentSpec {
                    replications: 1,
                    samples_per_replication: 50,
                    master_seed: seed,
                    floor_zero: true,
                    ..ExperimentSpec::new(chain_graph(0.9, 0.9), ExperimentKind::Single)
                };
                let out = simulate_graph(&spec).unwrap();
                prop_assert!(out.traces.iter().all(|t| t.perf >= 0.0));
            }
        }
    }
}
