//! Analytic expected-value model of performance propagation.
//!
//! Components form a DAG. Sources emit a constant performance level;
//! processors take the minimum of their inputs (a component's output cannot
//! be better than what feeds it) and transform it under normally distributed
//! stress x ~ N(eta, sigma2) against an upper tolerance limit t_hi. With
//! in-tolerance probability q = P[x <= t_hi], a processor of brittleness b
//! returns p_in·(1+b); otherwise it returns p_in·(1 − b·(x − t_hi)) on
//! average, i.e. p_in·(1 − b·mean_excess). Higher b buys in-tolerance gain
//! at the price of steeper degradation outside, and b = 0 passes performance
//! through untouched.
//!
//! Expectations are propagated as finite (weight, value) mixtures rather
//! than single means: each processor splits every incoming value atom into
//! an in-tolerance and an out-of-tolerance atom, and a min-join combines
//! input mixtures atom-wise. E[min] of independent inputs is therefore
//! computed correctly where a mean-only model would be biased upward —
//! on a graph joining a brittle branch with a constant side input the bias
//! would be ~b·mean_excess·(1−q), far outside Monte Carlo noise. Join
//! inputs are treated as independent (one stress generator per component);
//! correlation through shared upstream components is not modeled. Mixtures
//! that outgrow [`ATOM_CAP`] collapse to their mean, which keeps pathological
//! deep graphs finite at the cost of exactness there.
//!
//! The tolerance law t_hi = p_x + p_y/b ties a component's tolerance to its
//! brittleness: a perfectly ductile component (b = 0) tolerates anything,
//! reported as an infinite limit rather than an error.

use crate::normal;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Mixtures larger than this collapse to their mean; see the module docs.
pub const ATOM_CAP: usize = 4096;

/// Errors from stress models, tolerance laws, and graph validation.
#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("stress model needs a finite mean and positive finite variance (eta {0}, sigma2 {1})")]
    InvalidStress(f64, f64),
    #[error("brittleness must lie in [0, 1] (got {0})")]
    InvalidBrittleness(f64),
    #[error("input performance must be finite (got {0})")]
    InvalidPerformance(f64),
    #[error("tolerance limit must be a real number or +inf (got {0})")]
    InvalidToleranceLimit(f64),
    #[error("tolerance law needs finite p_x and nonnegative finite p_y")]
    InvalidToleranceLaw,
    #[error("graph has no components")]
    EmptyGraph,
    #[error("duplicate component id {0}")]
    DuplicateId(ComponentId),
    #[error("component {0}: input {1} does not exist")]
    UnknownInput(ComponentId, ComponentId),
    #[error("processor {0} needs at least one input")]
    NoInputs(ComponentId),
    #[error("source {0} needs a finite performance level")]
    BadSourcePerf(ComponentId),
    #[error("graph needs at least one source")]
    NoSource,
    #[error("graph needs at least one output")]
    NoOutput,
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error("component {0} is not a processor")]
    NotAProcessor(ComponentId),
    #[error("graph has a cycle through {0}")]
    Cycle(ComponentId),
}

/// Normally distributed stress: x ~ N(eta, sigma2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressModel {
    eta: f64,
    sigma2: f64,
}

impl StressModel {
    pub fn new(eta: f64, sigma2: f64) -> Result<Self, GraphError> {
        if !eta.is_finite() || !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(GraphError::InvalidStress(eta, sigma2));
        }
        Ok(Self { eta, sigma2 })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

fn check_limit(t_hi: f64) -> Result<(), GraphError> {
    if t_hi.is_nan() || t_hi == f64::NEG_INFINITY {
        return Err(GraphError::InvalidToleranceLimit(t_hi));
    }
    Ok(())
}

/// (in-tolerance probability, mean excess) for a validated limit.
fn tail_split(stress: &StressModel, t_hi: f64) -> (f64, f64) {
    if t_hi == f64::INFINITY {
        return (1.0, 0.0);
    }
    let alpha = (t_hi - stress.eta) / stress.sigma();
    (normal::cdf(alpha), stress.sigma() * normal::std_mean_excess(alpha))
}

/// P[x <= t_hi] under the stress model, accurate to well below 1e-12.
pub fn in_tolerance_prob(stress: &StressModel, t_hi: f64) -> Result<f64, GraphError> {
    check_limit(t_hi)?;
    Ok(tail_split(stress, t_hi).0)
}

/// E[x − t_hi | x > t_hi]: the expected overshoot once stress exceeds the
/// limit. Nonnegative, decreasing in t_hi, and finite even where the tail
/// probability underflows (there the out-of-tolerance branch carries zero
/// weight anyway).
pub fn mean_excess(stress: &StressModel, t_hi: f64) -> Result<f64, GraphError> {
    check_limit(t_hi)?;
    Ok(tail_split(stress, t_hi).1)
}

/// Expected output of one component: gain branch p_in(1+b) with weight q,
/// degradation branch p_in(1 − b·mean_excess) with weight 1−q. b = 0
/// short-circuits to p_in exactly.
pub fn pout_expected(
    p_in: f64,
    b: f64,
    stress: &StressModel,
    t_hi: f64,
) -> Result<f64, GraphError> {
    if !p_in.is_finite() {
        return Err(GraphError::InvalidPerformance(p_in));
    }
    check_brittleness(b)?;
    check_limit(t_hi)?;
    if b == 0.0 {
        return Ok(p_in);
    }
    let (q, me) = tail_split(stress, t_hi);
    Ok(p_in * (1.0 + b) * q + p_in * (1.0 - b * me) * (1.0 - q))
}

fn check_brittleness(b: f64) -> Result<(), GraphError> {
    if !(0.0..=1.0).contains(&b) {
        return Err(GraphError::InvalidBrittleness(b));
    }
    Ok(())
}

/// Linear law tying tolerance to brittleness: t_hi = p_x + p_y / b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceLaw {
    p_x: f64,
    p_y: f64,
}

impl ToleranceLaw {
    pub fn new(p_x: f64, p_y: f64) -> Result<Self, GraphError> {
        if !p_x.is_finite() || !p_y.is_finite() || p_y < 0.0 {
            return Err(GraphError::InvalidToleranceLaw);
        }
        Ok(Self { p_x, p_y })
    }

    pub fn p_x(&self) -> f64 {
        self.p_x
    }

    pub fn p_y(&self) -> f64 {
        self.p_y
    }
}

/// Tolerance limit for brittleness `b` under `law`; the perfectly ductile
/// limit b = 0 yields +inf (tolerates any stress), not an error.
pub fn tolerance_from_brittleness(law: &ToleranceLaw, b: f64) -> Result<f64, GraphError> {
    check_brittleness(b)?;
    if b == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(law.p_x + law.p_y / b)
}

/// Component name; compared and printed as plain text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ComponentId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// What a component is: a constant source or a stress-driven processor.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentKind {
    Source {
        perf: f64,
    },
    Processor {
        b: f64,
        stress: StressModel,
        t_hi: f64,
        inputs: Vec<ComponentId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub id: ComponentId,
    pub kind: ComponentKind,
}

impl ComponentSpec {
    pub fn source(id: impl Into<ComponentId>, perf: f64) -> Self {
        Self {
            id: id.into(),
            kind: ComponentKind::Source { perf },
        }
    }

    pub fn processor(
        id: impl Into<ComponentId>,
        b: f64,
        stress: StressModel,
        t_hi: f64,
        inputs: Vec<ComponentId>,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ComponentKind::Processor {
                b,
                stress,
                t_hi,
                inputs,
            },
        }
    }

    pub fn is_processor(&self) -> bool {
        matches!(self.kind, ComponentKind::Processor { .. })
    }
}

/// Validated component DAG. Construction checks ids, input references,
/// parameter ranges, acyclicity, and the presence of at least one source and
/// one output; the topological order and resolved input indices are cached
/// for evaluation.
#[derive(Debug, Clone)]
pub struct SystemGraph {
    components: Vec<ComponentSpec>,
    outputs: Vec<usize>,
    topo: Vec<usize>,
    inputs_resolved: Vec<Vec<usize>>,
}

impl SystemGraph {
    pub fn new(
        components: Vec<ComponentSpec>,
        outputs: Vec<ComponentId>,
    ) -> Result<Self, GraphError> {
        if components.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, c) in components.iter().enumerate() {
            if index.insert(c.id.as_str(), i).is_some() {
                return Err(GraphError::DuplicateId(c.id.clone()));
            }
        }
        let mut inputs_resolved = vec![Vec::new(); components.len()];
        let mut has_source = false;
        for (i, c) in components.iter().enumerate() {
            match &c.kind {
                ComponentKind::Source { perf } => {
                    if !perf.is_finite() {
                        return Err(GraphError::BadSourcePerf(c.id.clone()));
                    }
                    has_source = true;
                }
                ComponentKind::Processor {
                    b, t_hi, inputs, ..
                } => {
                    check_brittleness(*b)?;
                    check_limit(*t_hi)?;
                    if inputs.is_empty() {
                        return Err(GraphError::NoInputs(c.id.clone()));
                    }
                    for input in inputs {
                        let j = *index.get(input.as_str()).ok_or_else(|| {
                            GraphError::UnknownInput(c.id.clone(), input.clone())
                        })?;
                        inputs_resolved[i].push(j);
                    }
                }
            }
        }
        if !has_source {
            return Err(GraphError::NoSource);
        }
        if outputs.is_empty() {
            return Err(GraphError::NoOutput);
        }
        let mut output_idx = Vec::with_capacity(outputs.len());
        for id in &outputs {
            let j = *index
                .get(id.as_str())
                .ok_or_else(|| GraphError::UnknownComponent(id.clone()))?;
            if !output_idx.contains(&j) {
                output_idx.push(j);
            }
        }
        let topo = topo_sort(&components, &inputs_resolved)?;
        Ok(Self {
            components,
            outputs: output_idx,
            topo,
            inputs_resolved,
        })
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id.as_str() == id)
    }

    /// Output component indices, in declaration order.
    pub fn output_indices(&self) -> &[usize] {
        &self.outputs
    }

    pub fn output_ids(&self) -> Vec<ComponentId> {
        self.outputs
            .iter()
            .map(|&i| self.components[i].id.clone())
            .collect()
    }

    pub(crate) fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub(crate) fn resolved_inputs(&self, idx: usize) -> &[usize] {
        &self.inputs_resolved[idx]
    }

    /// Copy of the graph with one processor's brittleness replaced.
    pub fn with_processor_b(&self, id: &str, b: f64) -> Result<Self, GraphError> {
        check_brittleness(b)?;
        let idx = self
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownComponent(ComponentId::new(id)))?;
        let mut components = self.components.clone();
        match &mut components[idx].kind {
            ComponentKind::Processor { b: slot, .. } => *slot = b,
            ComponentKind::Source { .. } => {
                return Err(GraphError::NotAProcessor(ComponentId::new(id)))
            }
        }
        Self::new(components, self.output_ids())
    }
}

fn topo_sort(
    components: &[ComponentSpec],
    inputs: &[Vec<usize>],
) -> Result<Vec<usize>, GraphError> {
    let n = components.len();
    let mut indegree = vec![0usize; n];
    let mut dependents = vec![Vec::new(); n];
    for (i, ins) in inputs.iter().enumerate() {
        indegree[i] = ins.len();
        for &j in ins {
            dependents[j].push(i);
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    let mut cursor = 0;
    while cursor < ready.len() {
        let i = ready[cursor];
        cursor += 1;
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(d);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
        return Err(GraphError::Cycle(components[stuck].id.clone()));
    }
    Ok(order)
}

/// Expected performance per component, in graph declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedPerf {
    entries: Vec<(ComponentId, f64)>,
}

impl ExpectedPerf {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(cid, _)| cid.as_str() == id)
            .map(|&(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ComponentId, f64)> {
        self.entries.iter().map(|(id, v)| (id, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy)]
struct Atom {
    w: f64,
    v: f64,
}

fn merge_atoms(atoms: &mut Vec<Atom>) {
    atoms.sort_by(|a, b| a.v.partial_cmp(&b.v).unwrap());
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms.drain(..) {
        match merged.last_mut() {
            Some(last) if last.v == a.v => last.w += a.w,
            _ => merged.push(a),
        }
    }
    *atoms = merged;
}

fn cap_atoms(atoms: &mut Vec<Atom>) {
    if atoms.len() > ATOM_CAP {
        let w: f64 = atoms.iter().map(|a| a.w).sum();
        let v = atoms.iter().map(|a| a.w * a.v).sum::<f64>() / w;
        *atoms = vec![Atom { w, v }];
    }
}

/// Expected performance of every component by mixture propagation in
/// topological order. Infallible: everything it needs was validated when the
/// graph was constructed.
pub fn evaluate_graph_expected(graph: &SystemGraph) -> ExpectedPerf {
    let n = graph.components().len();
    let mut mixes: Vec<Vec<Atom>> = vec![Vec::new(); n];
    for &idx in graph.topo_order() {
        let mix = match &graph.components()[idx].kind {
            ComponentKind::Source { perf } => vec![Atom { w: 1.0, v: *perf }],
            ComponentKind::Processor {
                b, stress, t_hi, ..
            } => {
                let ins = graph.resolved_inputs(idx);
                let mut joined = mixes[ins[0]].clone();
                for &j in &ins[1..] {
                    let mut next = Vec::with_capacity(joined.len() * mixes[j].len());
                    for a in &joined {
                        for b_atom in &mixes[j] {
                            next.push(Atom {
                                w: a.w * b_atom.w,
                                v: a.v.min(b_atom.v),
                            });
                        }
                    }
                    merge_atoms(&mut next);
                    cap_atoms(&mut next);
                    joined = next;
                }
                let (q, me) = tail_split(stress, *t_hi);
                let gain = 1.0 + b;
                let damp = 1.0 - b * me;
                let mut out = Vec::with_capacity(joined.len() * 2);
                for a in &joined {
                    if q > 0.0 {
                        out.push(Atom {
                            w: a.w * q,
                            v: a.v * gain,
                        });
                    }
                    if q < 1.0 {
                        out.push(Atom {
                            w: a.w * (1.0 - q),
                            v: a.v * damp,
                        });
                    }
                }
                merge_atoms(&mut out);
                cap_atoms(&mut out);
                out
            }
        };
        mixes[idx] = mix;
    }
    let entries = graph
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mean = mixes[i].iter().map(|a| a.w * a.v).sum();
            (c.id.clone(), mean)
        })
        .collect();
    ExpectedPerf { entries }
}

/// One point of an analytic brittleness sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub b: f64,
    pub expected: ExpectedPerf,
}

/// Expected performance of every component as `target`'s brittleness walks
/// through `b_values`.
pub fn sweep_expected(
    graph: &SystemGraph,
    target: &str,
    b_values: &[f64],
) -> Result<Vec<SweepPoint>, GraphError> {
    b_values
        .iter()
        .map(|&b| {
            let g = graph.with_processor_b(target, b)?;
            Ok(SweepPoint {
                b,
                expected: evaluate_graph_expected(&g),
            })
        })
        .collect()
}
