//! Text formats: the CSV schemas shared by every tool in the workspace and
//! the flat key=value experiment file.
//!
//! All CSV files carry an exact header line and plain comma separation (no
//! quoting; ids and labels never contain commas). Floats are written with
//! Rust's shortest round-trip formatting, so parsing a written file and
//! rewriting it is byte-identical. Empty cells mean "not applicable": a
//! source row's stress columns, a single-sample ci95, an unstable queue's
//! perf.
//!
//! The graph format (`kind,id,perf,b,mean,variance,limit,inputs`) has no
//! output column; components that no other component consumes are the
//! graph's outputs, in file order.
//!
//! Experiment files are one `key = value` per line, `#` lines are comments.
//! Keys: `graph` (path, resolved against the experiment file's directory by
//! the caller), `kind` (single | bsweep | location), `target`, `b_values`
//! (value-list syntax), `fixed_b`, `replications`, `samples`, `seed`.

use crate::curves::PerformanceCurve;
use crate::propagation::{ComponentId, ComponentSpec, ExpectedPerf, StressModel, SweepPoint,
    SystemGraph};
use crate::scenarios::{CuspCell, HysteresisRow, MM1Row, StopWaitMetrics};
use crate::simengine::{LocationRow, SummaryStats, SweepRow, TraceRow};
use std::fmt::Write as _;
use thiserror::Error;

/// A malformed line; `line` is 1-based, 0 for file-level problems.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl ParseError {
    fn new(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            msg: msg.into(),
        }
    }
}

fn parse_float(field: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| ParseError::new(line, format!("{what}: cannot parse '{field}' as a number")))
}

/// Numbered non-empty lines with Windows endings stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    want: &str,
) -> Result<(), ParseError> {
    match lines.next() {
        Some((_, got)) if got.trim() == want => Ok(()),
        Some((line, got)) => Err(ParseError::new(
            line,
            format!("expected header '{want}', found '{got}'"),
        )),
        None => Err(ParseError::new(0, format!("empty file, expected '{want}'"))),
    }
}

fn fields_of(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>, ParseError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(ParseError::new(
            lineno,
            format!("expected {n} comma-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

/// Reads the `s,p` schema into a curve; sample validity (finite values,
/// strictly increasing s) is checked per line.
pub fn parse_curve_csv(text: &str) -> Result<PerformanceCurve, ParseError> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, "s,p")?;
    let mut samples = Vec::new();
    let mut prev_s = f64::NEG_INFINITY;
    for (lineno, line) in lines {
        let fields = fields_of(line, 2, lineno)?;
        let s = parse_float(fields[0], lineno, "s")?;
        let p = parse_float(fields[1], lineno, "p")?;
        if !s.is_finite() || !p.is_finite() {
            return Err(ParseError::new(lineno, "curve samples must be finite"));
        }
        if s <= prev_s {
            return Err(ParseError::new(
                lineno,
                format!("s values must be strictly increasing ({s} after {prev_s})"),
            ));
        }
        prev_s = s;
        samples.push((s, p));
    }
    PerformanceCurve::new(samples)
        .map_err(|e| ParseError::new(0, format!("curve rejected: {e}")))
}

/// Reads the `x,s,p` family schema. Rows with equal x must be contiguous;
/// each run becomes one member curve, in file order.
pub fn parse_family_csv(text: &str) -> Result<Vec<(f64, PerformanceCurve)>, ParseError> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, "x,s,p")?;
    let mut members: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for (lineno, line) in lines {
        let fields = fields_of(line, 3, lineno)?;
        let x = parse_float(fields[0], lineno, "x")?;
        let s = parse_float(fields[1], lineno, "s")?;
        let p = parse_float(fields[2], lineno, "p")?;
        if !x.is_finite() || !s.is_finite() || !p.is_finite() {
            return Err(ParseError::new(lineno, "family samples must be finite"));
        }
        match members.last_mut() {
            Some((key, samples)) if *key == x => {
                if s <= samples.last().expect("runs are never empty").0 {
                    return Err(ParseError::new(
                        lineno,
                        format!("s values must be strictly increasing within member x={x}"),
                    ));
                }
                samples.push((s, p));
            }
            _ => members.push((x, vec![(s, p)])),
        }
    }
    members
        .into_iter()
        .map(|(x, samples)| {
            PerformanceCurve::new(samples)
                .map(|c| (x, c))
                .map_err(|e| ParseError::new(0, format!("member x={x} rejected: {e}")))
        })
        .collect()
}

fn nonempty<'a>(field: &'a str, lineno: usize, what: &str) -> Result<&'a str, ParseError> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(ParseError::new(lineno, format!("{what} must not be empty")));
    }
    Ok(trimmed)
}

fn expect_empty(field: &str, lineno: usize, what: &str) -> Result<(), ParseError> {
    if !field.trim().is_empty() {
        return Err(ParseError::new(
            lineno,
            format!("{what} must be empty for this component kind"),
        ));
    }
    Ok(())
}

/// Reads the component-graph schema and assembles a validated graph.
/// Outputs are the sink components. Line-level problems surface as
/// [`crate::Error::Parse`]; structural problems (cycles, duplicate ids) keep
/// their graph error.
pub fn parse_graph_csv(text: &str) -> Result<SystemGraph, crate::Error> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, "kind,id,perf,b,mean,variance,limit,inputs").map_err(box_parse)?;
    let mut components: Vec<ComponentSpec> = Vec::new();
    let mut consumed: Vec<ComponentId> = Vec::new();
    for (lineno, line) in lines {
        let fields = fields_of(line, 8, lineno).map_err(box_parse)?;
        let kind = nonempty(fields[0], lineno, "kind").map_err(box_parse)?;
        let id = nonempty(fields[1], lineno, "id").map_err(box_parse)?;
        match kind {
            "source" => {
                let perf = parse_float(
                    nonempty(fields[2], lineno, "perf").map_err(box_parse)?,
                    lineno,
                    "perf",
                )
                .map_err(box_parse)?;
                for (field, name) in [
                    (fields[3], "b"),
                    (fields[4], "mean"),
                    (fields[5], "variance"),
                    (fields[6], "limit"),
                    (fields[7], "inputs"),
                ] {
                    expect_empty(field, lineno, name).map_err(box_parse)?;
                }
                components.push(ComponentSpec::source(id, perf));
            }
            "processor" => {
                expect_empty(fields[2], lineno, "perf").map_err(box_parse)?;
                let b = parse_float(
                    nonempty(fields[3], lineno, "b").map_err(box_parse)?,
                    lineno,
                    "b",
                )
                .map_err(box_parse)?;
                let mean = parse_float(
                    nonempty(fields[4], lineno, "mean").map_err(box_parse)?,
                    lineno,
                    "mean",
                )
                .map_err(box_parse)?;
                let variance = parse_float(
                    nonempty(fields[5], lineno, "variance").map_err(box_parse)?,
                    lineno,
                    "variance",
                )
                .map_err(box_parse)?;
                let limit = parse_float(
                    nonempty(fields[6], lineno, "limit").map_err(box_parse)?,
                    lineno,
                    "limit",
                )
                .map_err(box_parse)?;
                let inputs: Vec<ComponentId> = nonempty(fields[7], lineno, "inputs")
                    .map_err(box_parse)?
                    .split(';')
                    .map(|s| ComponentId::new(s.trim()))
                    .collect();
                let stress = StressModel::new(mean, variance)?;
                consumed.extend(inputs.iter().cloned());
                components.push(ComponentSpec::processor(id, b, stress, limit, inputs));
            }
            other => {
                return Err(box_parse(ParseError::new(
                    lineno,
                    format!("unknown component kind '{other}' (want source or processor)"),
                )))
            }
        }
    }
    let outputs: Vec<ComponentId> = components
        .iter()
        .map(|c| c.id.clone())
        .filter(|id| !consumed.contains(id))
        .collect();
    Ok(SystemGraph::new(components, outputs)?)
}

fn box_parse(e: ParseError) -> crate::Error {
    crate::Error::Parse(e)
}

/// Raw contents of an experiment file; cross-field validation and graph
/// loading are the caller's job.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentFile {
    pub graph: String,
    pub kind: String,
    pub target: Option<String>,
    pub b_values: Option<Vec<f64>>,
    pub fixed_b: Option<f64>,
    pub replications: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

/// Parses the key=value experiment format. Unknown and duplicate keys are
/// errors; `graph` and `kind` are required.
pub fn parse_experiment_kv(text: &str) -> Result<ExperimentFile, ParseError> {
    let mut file = ExperimentFile::default();
    let mut seen: Vec<String> = Vec::new();
    for (lineno, line) in content_lines(text) {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ParseError::new(lineno, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(ParseError::new(lineno, format!("duplicate key '{key}'")));
        }
        seen.push(key.to_owned());
        match key {
            "graph" => file.graph = value.to_owned(),
            "kind" => {
                if !["single", "bsweep", "location"].contains(&value) {
                    return Err(ParseError::new(
                        lineno,
                        format!("kind must be single, bsweep, or location (got '{value}')"),
                    ));
                }
                file.kind = value.to_owned();
            }
            "target" => file.target = Some(value.to_owned()),
            "b_values" => file.b_values = Some(parse_values(value).map_err(|e| {
                ParseError::new(lineno, e.msg)
            })?),
            "fixed_b" => file.fixed_b = Some(parse_float(value, lineno, "fixed_b")?),
            "replications" => {
                file.replications = Some(parse_count(value, lineno, "replications")?)
            }
            "samples" => file.samples = Some(parse_count(value, lineno, "samples")?),
            "seed" => {
                file.seed = Some(value.parse::<u64>().map_err(|_| {
                    ParseError::new(lineno, format!("seed: cannot parse '{value}'"))
                })?)
            }
            other => {
                return Err(ParseError::new(lineno, format!("unknown key '{other}'")));
            }
        }
    }
    if file.graph.is_empty() {
        return Err(ParseError::new(0, "missing required key 'graph'"));
    }
    if file.kind.is_empty() {
        return Err(ParseError::new(0, "missing required key 'kind'"));
    }
    Ok(file)
}

fn parse_count(value: &str, lineno: usize, what: &str) -> Result<usize, ParseError> {
    let n = value
        .parse::<usize>()
        .map_err(|_| ParseError::new(lineno, format!("{what}: cannot parse '{value}'")))?;
    if n == 0 {
        return Err(ParseError::new(lineno, format!("{what} must be at least 1")));
    }
    Ok(n)
}

/// Value-list syntax: a bare number, a comma list `a,b,c`, or a range
/// `start:stop:count` with inclusive endpoints and count >= 2.
pub fn parse_values(text: &str) -> Result<Vec<f64>, ParseError> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(ParseError::new(0, format!("range '{text}' needs start:stop:count")));
        }
        let start = parse_float(parts[0], 0, "range start")?;
        let stop = parse_float(parts[1], 0, "range stop")?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| ParseError::new(0, format!("range count: cannot parse '{}'", parts[2])))?;
        if count < 2 {
            return Err(ParseError::new(0, "range count must be at least 2"));
        }
        if !start.is_finite() || !stop.is_finite() {
            return Err(ParseError::new(0, "range endpoints must be finite"));
        }
        let last = count - 1;
        return Ok((0..count)
            .map(|i| {
                if i == 0 {
                    start
                } else if i == last {
                    stop
                } else {
                    (start * (last - i) as f64 + stop * i as f64) / last as f64
                }
            })
            .collect());
    }
    text.split(',')
        .map(|part| parse_float(part, 0, "value"))
        .collect()
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, "{v}");
    }
}

pub fn curve_csv(curve: &PerformanceCurve) -> String {
    let mut out = String::from("s,p\n");
    for (s, p) in curve.samples() {
        let _ = writeln!(out, "{s},{p}");
    }
    out
}

pub fn family_csv(members: &[(f64, PerformanceCurve)]) -> String {
    let mut out = String::from("x,s,p\n");
    for (x, curve) in members {
        for (s, p) in curve.samples() {
            let _ = writeln!(out, "{x},{s},{p}");
        }
    }
    out
}

pub fn metrics_csv(rows: &[(&str, f64)]) -> String {
    let mut out = String::from("metric,value\n");
    for (metric, value) in rows {
        let _ = writeln!(out, "{metric},{value}");
    }
    out
}

/// One sensitivity pair; psi is absent when a probe offset would leave the
/// family's key range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityRow {
    pub x1: f64,
    pub x2: f64,
    pub gamma: f64,
    pub psi: Option<f64>,
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("x1,x2,gamma,psi\n");
    for row in rows {
        let _ = write!(out, "{},{},{},", row.x1, row.x2, row.gamma);
        push_opt(&mut out, row.psi);
        out.push('\n');
    }
    out
}

pub fn chain_single_csv(perf: &ExpectedPerf) -> String {
    let mut out = String::from("b,component,expected_perf\n");
    for (id, value) in perf.iter() {
        let _ = writeln!(out, ",{id},{value}");
    }
    out
}

pub fn chain_sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("b,component,expected_perf\n");
    for point in points {
        for (id, value) in point.expected.iter() {
            let _ = writeln!(out, "{},{id},{value}", point.b);
        }
    }
    out
}

pub fn traces_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("replication,sample,component,stress,perf\n");
    for row in rows {
        let _ = write!(out, "{},{},{},", row.replication, row.sample, row.component);
        push_opt(&mut out, row.stress);
        let _ = writeln!(out, ",{}", row.perf);
    }
    out
}

fn push_stats(out: &mut String, stats: &SummaryStats) {
    let _ = write!(out, "{},{},{},", stats.n, stats.mean, stats.variance);
    push_opt(out, stats.ci95_halfwidth);
    out.push('\n');
}

/// Single-run summary: per-component statistics without a sweep column.
pub fn summary_csv(stats: &[(ComponentId, SummaryStats)]) -> String {
    let mut out = String::from("component,n,mean,variance,ci95\n");
    for (id, s) in stats {
        let _ = write!(out, "{id},");
        push_stats(&mut out, s);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("b,component,n,mean,variance,ci95\n");
    for row in rows {
        let _ = write!(out, "{},{},", row.b, row.component);
        push_stats(&mut out, &row.stats);
    }
    out
}

pub fn location_csv(rows: &[LocationRow]) -> String {
    let mut out = String::from("arrangement,b,component,n,mean,variance,ci95\n");
    for row in rows {
        let _ = write!(out, "{},{},{},", row.arrangement.label(), row.b, row.component);
        push_stats(&mut out, &row.stats);
    }
    out
}

pub fn mm1_csv(rows: &[MM1Row]) -> String {
    let mut out = String::from("mu,rho,perf,valid\n");
    for row in rows {
        let _ = write!(out, "{},{},", row.mu, row.rho);
        push_opt(&mut out, row.perf);
        let _ = writeln!(out, ",{}", row.valid);
    }
    out
}

pub fn aloha_csv(cells: &[CuspCell]) -> String {
    let mut out = String::from("p0,p1,stable_count\n");
    for cell in cells {
        let _ = writeln!(out, "{},{},{}", cell.p0, cell.p1, cell.stable_count);
    }
    out
}

pub fn hysteresis_csv(rows: &[HysteresisRow]) -> String {
    let mut out = String::from("direction,p0,n_star,jump_flag\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.direction.label(),
            row.p0,
            row.n_star,
            row.jump
        );
    }
    out
}

pub fn stopwait_csv(rows: &[(f64, StopWaitMetrics)]) -> String {
    let mut out = String::from("timeout,expected_tx,expected_time,throughput\n");
    for (timeout, m) in rows {
        let _ = writeln!(
            out,
            "{timeout},{},{},{}",
            m.expected_tx, m.expected_time, m.throughput
        );
    }
    out
}
