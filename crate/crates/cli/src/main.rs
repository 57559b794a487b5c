//! `brittle`: batch front end for the brittleness toolkit.
//!
//! One analysis per invocation: curve metrics, analytic graph evaluation,
//! a Monte Carlo experiment, or a scenario study. Every run writes its CSV
//! tables plus a `run_metadata.txt` (version, command line, seed, config
//! digest, duration) into `--out`; rerunning with the same digest and seed
//! reproduces the data files byte for byte.
//!
//! Exit codes: 0 success, 2 malformed input (including usage errors), 3
//! domain violation, 4 internal failure. `BRITTLE_THREADS` caps the worker
//! pool; 0 or unset picks the core count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use brittle_core::curves::{
    curve_brittleness, gamma, modulus, psi, CurveError, CurveFamily, PerformanceCurve,
    StateDomain, ToleranceRegion, DEFAULT_GRID_POINTS,
};
use brittle_core::io::{
    aloha_csv, chain_single_csv, chain_sweep_csv, hysteresis_csv, location_csv, metrics_csv,
    mm1_csv, parse_curve_csv, parse_experiment_kv, parse_family_csv, parse_graph_csv,
    parse_values, sensitivity_csv, stopwait_csv, summary_csv, sweep_csv, traces_csv,
    ExperimentFile, ParseError, SensitivityRow,
};
use brittle_core::propagation::{evaluate_graph_expected, sweep_expected, ComponentId, GraphError};
use brittle_core::scenarios::{
    aloha_cusp_scan, aloha_hysteresis, mm1_energy_curve, stopwait_metrics, ScenarioError,
    StopWaitParams,
};
use brittle_core::simengine::{
    designated_chain, experiment_bsweep, experiment_location, simulate_graph, ExperimentKind,
    ExperimentSpec, SimError,
};
use brittle_core::ErrorClass;

const EXIT_PARSE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Brittleness analysis over performance curves, component graphs, and
/// protocol scenarios.
#[derive(Parser)]
#[command(name = "brittle", version)]
struct Cli {
    /// Directory the CSV tables and run_metadata.txt are written into.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed override for Monte Carlo runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Clamp recorded per-sample performance at zero.
    #[arg(long, global = true)]
    floor_zero: bool,
    /// Grid resolution for curve metrics (default 1001 points).
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Area metrics for one curve, plus a sensitivity table for a family.
    Metrics(MetricsArgs),
    /// Analytic expected performance of a component graph, single or swept.
    Chain(ChainArgs),
    /// Monte Carlo experiment described by a key=value file.
    Simulate(SimulateArgs),
    /// Closed-form scenario tables.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Args)]
struct MetricsArgs {
    /// Performance curve CSV (header `s,p`).
    #[arg(long)]
    curve: PathBuf,
    /// Upper tolerance limit.
    #[arg(long, allow_negative_numbers = true)]
    t_hi: f64,
    /// Lower tolerance limit; omitted means unbounded below.
    #[arg(long, allow_negative_numbers = true)]
    t_lo: Option<f64>,
    /// Integration domain `min:max`; defaults to the curve's sampled range.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Curve family CSV (header `x,s,p`); adds sensitivity.csv to the run.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Central-difference step for the sensitivity table.
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    h: f64,
    /// Stress observation; paired with --degradation it adds a modulus row.
    #[arg(long, requires = "degradation", allow_negative_numbers = true)]
    stress: Option<f64>,
    /// Performance degradation observed under --stress.
    #[arg(long, requires = "stress", allow_negative_numbers = true)]
    degradation: Option<f64>,
}

#[derive(Args)]
struct ChainArgs {
    /// Component graph CSV (header `kind,id,perf,b,mean,variance,limit,inputs`).
    #[arg(long)]
    graph: PathBuf,
    /// Processor whose brittleness is swept; omitted means one evaluation.
    #[arg(long, requires = "b_range")]
    target: Option<String>,
    /// Brittleness values for the target (number, comma list, or start:stop:count).
    #[arg(long, requires = "target")]
    b_range: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment file, one `key = value` per line.
    #[arg(long)]
    experiment: PathBuf,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Finite M/M/1 queue: service-rate sweep at fixed arrival rate.
    Mm1(Mm1Args),
    /// Slotted ALOHA: stable-equilibrium counts over a (p0, p1) grid.
    Aloha(AlohaArgs),
    /// Stop-and-wait ARQ: expected cost across timeout values.
    Stopwait(StopwaitArgs),
}

#[derive(Args)]
struct Mm1Args {
    /// Arrival rate.
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Service-rate values (number, comma list, or start:stop:count).
    #[arg(long)]
    mu: String,
    /// Queue capacity N.
    #[arg(long)]
    capacity: u32,
}

#[derive(Args)]
struct AlohaArgs {
    /// Number of users m.
    #[arg(long)]
    users: u32,
    /// Fresh-transmission probabilities (value-list syntax).
    #[arg(long)]
    p0_grid: String,
    /// Retry probabilities (value-list syntax).
    #[arg(long)]
    p1_grid: String,
    /// Retry probability for a hysteresis sweep along the p0 grid (up, then down).
    #[arg(long, allow_negative_numbers = true)]
    hysteresis_p1: Option<f64>,
}

#[derive(Args)]
struct StopwaitArgs {
    /// Per-packet loss probability.
    #[arg(long, allow_negative_numbers = true)]
    loss: f64,
    /// Timeout values (value-list syntax).
    #[arg(long)]
    timeout: String,
    /// Transmission time per packet.
    #[arg(long, allow_negative_numbers = true)]
    tx: f64,
    /// Round-trip time.
    #[arg(long, allow_negative_numbers = true)]
    rtt: f64,
}

/// A failed run: anyhow chain for the message, exit code for the class.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn parse(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_PARSE,
            error,
        }
    }

    fn domain(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_DOMAIN,
            error,
        }
    }

    fn internal(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_INTERNAL,
            error,
        }
    }

    /// Parse error raised while reading `path`.
    fn parse_in(path: &Path, error: ParseError) -> Self {
        Self {
            code: EXIT_PARSE,
            error: anyhow::Error::new(error).context(path.display().to_string()),
        }
    }

    /// Library error raised while handling `path`, classified by origin.
    fn lib_in(path: &Path, error: brittle_core::Error) -> Self {
        let code = match error.class() {
            ErrorClass::Parse => EXIT_PARSE,
            ErrorClass::Domain => EXIT_DOMAIN,
        };
        Self {
            code,
            error: anyhow::Error::new(error).context(path.display().to_string()),
        }
    }

    /// Domain error annotated with the flag it traces back to.
    fn flagged(error: ScenarioError, flag: impl FnOnce(&ScenarioError) -> &'static str) -> Self {
        let name = flag(&error);
        Self::domain(anyhow::Error::new(error).context(name))
    }
}

impl From<CurveError> for Failure {
    fn from(e: CurveError) -> Self {
        Self::domain(e.into())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Self::domain(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Self::domain(e.into())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Self::domain(e.into())
    }
}

/// Run state shared by the commands: output directory, config digest
/// accumulator, effective seed, and extra metadata lines.
struct RunContext {
    out: PathBuf,
    digest: Sha256,
    seed: u64,
    notes: Vec<String>,
}

impl RunContext {
    fn new(cli: &Cli) -> Self {
        let mut digest = Sha256::new();
        for arg in std::env::args() {
            digest.update(arg.as_bytes());
            digest.update([0x1f]);
        }
        Self {
            out: cli.out.clone(),
            digest,
            seed: cli.seed.unwrap_or(0),
            notes: Vec::new(),
        }
    }

    /// Reads an input file into the digest. An unreadable file is a
    /// parse-class failure: the config references something unusable.
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::parse(anyhow!("{}: {e}", path.display())))?;
        self.digest.update(text.as_bytes());
        self.digest.update([0x1f]);
        Ok(text)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Failure::internal(anyhow!("writing {}: {e}", path.display())))
    }

    fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    fn write_metadata(self, started: Instant) -> Result<(), Failure> {
        let mut hex = String::with_capacity(64);
        for byte in self.digest.finalize() {
            let _ = write!(hex, "{byte:02x}");
        }
        let argv: Vec<String> = std::env::args().collect();
        let mut text = String::new();
        let _ = writeln!(text, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(text, "command = {}", argv.join(" "));
        let _ = writeln!(text, "seed = {}", self.seed);
        let _ = writeln!(text, "config_digest = {hex}");
        let _ = writeln!(text, "duration_ms = {}", started.elapsed().as_millis());
        for note in &self.notes {
            let _ = writeln!(text, "{note}");
        }
        let path = self.out.join("run_metadata.txt");
        std::fs::write(&path, text)
            .map_err(|e| Failure::internal(anyhow!("writing {}: {e}", path.display())))
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    match run(&cli, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: &Cli, started: Instant) -> Result<(), Failure> {
    configure_threads()?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::internal(anyhow!("creating {}: {e}", cli.out.display())))?;
    let mut ctx = RunContext::new(cli);
    match &cli.command {
        Command::Metrics(args) => cmd_metrics(cli, args, &mut ctx)?,
        Command::Chain(args) => cmd_chain(args, &mut ctx)?,
        Command::Simulate(args) => cmd_simulate(cli, args, &mut ctx)?,
        Command::Scenario(cmd) => cmd_scenario(cmd, &mut ctx)?,
    }
    ctx.write_metadata(started)
}

/// Applies BRITTLE_THREADS to the global worker pool; 0 or unset means auto.
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BRITTLE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Failure::parse(anyhow!(
            "BRITTLE_THREADS must be a nonnegative integer, got '{raw}'"
        ))
    })?;
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::internal(anyhow!("thread pool: {e}")))
}

fn cmd_metrics(cli: &Cli, args: &MetricsArgs, ctx: &mut RunContext) -> Result<(), Failure> {
    let grid = cli.grid.unwrap_or(DEFAULT_GRID_POINTS);
    let text = ctx.read(&args.curve)?;
    let curve = parse_curve_csv(&text).map_err(|e| Failure::parse_in(&args.curve, e))?;
    let dom = match &args.domain {
        Some(spec) => parse_domain(spec)?,
        None => StateDomain::new(curve.s_min(), curve.s_max())?,
    };
    let tol = match args.t_lo {
        Some(t_lo) => ToleranceRegion::bounded(t_lo, args.t_hi),
        None => ToleranceRegion::upper(args.t_hi),
    }?;
    let report = curve_brittleness(&curve, &tol, &dom, grid)?;
    let mut rows: Vec<(&str, f64)> = vec![
        ("hardness", report.hardness),
        ("ductility", report.ductility),
        ("brittleness", report.brittleness),
    ];
    if let (Some(stress), Some(degradation)) = (args.stress, args.degradation) {
        // A rigid response (no degradation) prints as an infinite modulus.
        let value = modulus(stress, degradation)?.unwrap_or(f64::INFINITY);
        rows.push(("modulus", value));
    }
    ctx.write("metrics.csv", &metrics_csv(&rows))?;
    if let Some(path) = &args.family {
        let text = ctx.read(path)?;
        let members = parse_family_csv(&text).map_err(|e| Failure::parse_in(path, e))?;
        let fam_dom = match &args.domain {
            Some(spec) => parse_domain(spec)?,
            None => family_range(&members)?,
        };
        let family = CurveFamily::new(members, fam_dom, grid)?;
        let table = sensitivity_table(&family, args.h)?;
        ctx.write("sensitivity.csv", &sensitivity_csv(&table))?;
    }
    Ok(())
}

/// Widest domain every family member covers.
fn family_range(members: &[(f64, PerformanceCurve)]) -> Result<StateDomain, Failure> {
    let lo = members
        .iter()
        .map(|(_, c)| c.s_min())
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = members
        .iter()
        .map(|(_, c)| c.s_max())
        .fold(f64::INFINITY, f64::min);
    Ok(StateDomain::new(lo, hi)?)
}

/// Gamma for every ordered member pair; psi is left blank where x1 ± h
/// leaves the family's parameter range.
fn sensitivity_table(family: &CurveFamily, h: f64) -> Result<Vec<SensitivityRow>, Failure> {
    if h.is_nan() || h <= 0.0 {
        return Err(Failure::domain(anyhow!("--h must be positive, got {h}")));
    }
    let keys = family.keys().to_vec();
    let (first, last) = (keys[0], keys[keys.len() - 1]);
    let mut rows = Vec::with_capacity(keys.len() * (keys.len() - 1));
    for &x1 in &keys {
        for &x2 in &keys {
            if x1 == x2 {
                continue;
            }
            let g = gamma(family, x1, x2)?;
            let p = if x1 - h >= first && x1 + h <= last {
                Some(psi(family, x1, x2, h)?)
            } else {
                None
            };
            rows.push(SensitivityRow {
                x1,
                x2,
                gamma: g,
                psi: p,
            });
        }
    }
    Ok(rows)
}

/// Parses `min:max` into a state domain.
fn parse_domain(raw: &str) -> Result<StateDomain, Failure> {
    let parts: Vec<&str> = raw.split(':').collect();
    let [lo, hi] = parts[..] else {
        return Err(Failure::parse(anyhow!(
            "--domain needs 'min:max', got '{raw}'"
        )));
    };
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| Failure::parse(anyhow!("--domain min: cannot parse '{lo}'")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| Failure::parse(anyhow!("--domain max: cannot parse '{hi}'")))?;
    Ok(StateDomain::new(lo, hi)?)
}

fn cmd_chain(args: &ChainArgs, ctx: &mut RunContext) -> Result<(), Failure> {
    let text = ctx.read(&args.graph)?;
    let graph = parse_graph_csv(&text).map_err(|e| Failure::lib_in(&args.graph, e))?;
    let csv = match (&args.target, &args.b_range) {
        (Some(target), Some(range)) => {
            let values = flag_values(range, "--b-range")?;
            chain_sweep_csv(&sweep_expected(&graph, target, &values)?)
        }
        _ => chain_single_csv(&evaluate_graph_expected(&graph)),
    };
    ctx.write("chain.csv", &csv)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs, ctx: &mut RunContext) -> Result<(), Failure> {
    let text = ctx.read(&args.experiment)?;
    let file = parse_experiment_kv(&text).map_err(|e| Failure::parse_in(&args.experiment, e))?;
    let graph_path = args
        .experiment
        .parent()
        .unwrap_or(Path::new(""))
        .join(&file.graph);
    let graph_text = ctx.read(&graph_path)?;
    let graph = parse_graph_csv(&graph_text).map_err(|e| Failure::lib_in(&graph_path, e))?;
    let kind = experiment_kind(&file, &args.experiment)?;
    let mut spec = ExperimentSpec::new(graph, kind);
    if let Some(n) = file.replications {
        spec.replications = n;
    }
    if let Some(n) = file.samples {
        spec.samples_per_replication = n;
    }
    spec.master_seed = cli.seed.or(file.seed).unwrap_or(0);
    spec.floor_zero = cli.floor_zero;
    ctx.seed = spec.master_seed;
    match &spec.kind {
        ExperimentKind::Single => {
            let output = simulate_graph(&spec)?;
            ctx.write("traces.csv", &traces_csv(&output.traces))?;
            ctx.write("summary.csv", &summary_csv(&output.stats))?;
        }
        ExperimentKind::BSweep { .. } => {
            let rows = experiment_bsweep(&spec)?;
            ctx.write("sweep.csv", &sweep_csv(&rows))?;
        }
        ExperimentKind::Location { .. } => {
            let (first, second) = designated_chain(&spec.graph)?;
            let result = experiment_location(&spec)?;
            ctx.write("location.csv", &location_csv(&result.rows))?;
            ctx.note(format!("location_chain = {first} -> {second}"));
            for diff in &result.paired_diffs {
                let ci = diff
                    .stats
                    .ci95_halfwidth
                    .map_or(String::new(), |w| format!(" ci95 = {w}"));
                ctx.note(format!(
                    "paired_diff b = {} mean = {}{ci}",
                    diff.b, diff.stats.mean
                ));
            }
        }
    }
    Ok(())
}

/// Builds the experiment kind, reporting missing keys by name.
fn experiment_kind(file: &ExperimentFile, path: &Path) -> Result<ExperimentKind, Failure> {
    let missing = |key: &str| {
        Failure::parse(anyhow!(
            "{}: kind {} requires key '{key}'",
            path.display(),
            file.kind
        ))
    };
    match file.kind.as_str() {
        "single" => Ok(ExperimentKind::Single),
        "bsweep" => Ok(ExperimentKind::BSweep {
            target: ComponentId::new(file.target.as_deref().ok_or_else(|| missing("target"))?),
            b_values: file.b_values.clone().ok_or_else(|| missing("b_values"))?,
        }),
        "location" => Ok(ExperimentKind::Location {
            b_values: file.b_values.clone().ok_or_else(|| missing("b_values"))?,
            fixed_b: file.fixed_b.ok_or_else(|| missing("fixed_b"))?,
        }),
        other => Err(Failure::parse(anyhow!(
            "{}: unknown kind '{other}'",
            path.display()
        ))),
    }
}

fn cmd_scenario(cmd: &ScenarioCommand, ctx: &mut RunContext) -> Result<(), Failure> {
    match cmd {
        ScenarioCommand::Mm1(args) => {
            let mus = flag_values(&args.mu, "--mu")?;
            let rows = mm1_energy_curve(args.lambda, &mus, args.capacity)
                .map_err(|e| Failure::flagged(e, mm1_flag))?;
            ctx.write("mm1.csv", &mm1_csv(&rows))
        }
        ScenarioCommand::Aloha(args) => {
            let p0s = flag_values(&args.p0_grid, "--p0-grid")?;
            let p1s = flag_values(&args.p1_grid, "--p1-grid")?;
            let cells = aloha_cusp_scan(args.users, &p0s, &p1s)
                .map_err(|e| Failure::flagged(e, aloha_flag))?;
            ctx.write("aloha.csv", &aloha_csv(&cells))?;
            if let Some(p1) = args.hysteresis_p1 {
                let mut path = p0s.clone();
                path.extend(p0s.iter().rev().skip(1));
                let rows = aloha_hysteresis(args.users, p1, &path)
                    .map_err(|e| Failure::flagged(e, |_| "--hysteresis-p1"))?;
                ctx.write("hysteresis.csv", &hysteresis_csv(&rows))?;
            }
            Ok(())
        }
        ScenarioCommand::Stopwait(args) => {
            let timeouts = flag_values(&args.timeout, "--timeout")?;
            let mut rows = Vec::with_capacity(timeouts.len());
            for timeout in timeouts {
                let params = StopWaitParams::new(args.loss, timeout, args.tx, args.rtt)
                    .map_err(|e| Failure::flagged(e, |_| "--loss/--timeout/--tx/--rtt"))?;
                rows.push((timeout, stopwait_metrics(&params)));
            }
            ctx.write("stopwait.csv", &stopwait_csv(&rows))
        }
    }
}

/// Parses a value-list flag, naming the flag in errors.
fn flag_values(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    parse_values(text).map_err(|e| Failure::parse(anyhow!("{flag}: {}", e.msg)))
}

fn mm1_flag(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::InvalidArrivalRate(_) => "--lambda",
        ScenarioError::InvalidCapacity => "--capacity",
        _ => "--mu",
    }
}

fn aloha_flag(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::TooFewUsers(..) => "--users",
        _ => "--p0-grid/--p1-grid",
    }
}
