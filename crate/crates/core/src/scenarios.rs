//! Worked network models that exhibit brittle behavior in closed form.
//!
//! Four small systems, each analyzed without simulation: a finite-buffer
//! M/M/1 queue whose loss performance trades against service-rate energy; a
//! finite-population slotted ALOHA channel whose backlog drift folds into a
//! cusp catastrophe (bistability, sudden jumps, hysteresis); stop-and-wait
//! retransmission, where a conservative timeout buys loss robustness at a
//! steady throughput cost; and a feedback rule that adapts a component's
//! brittleness, and with it the tolerance limit t_hi = p_x + p_y/b, to an
//! observed exceedance rate.
//!
//! ALOHA equilibria treat the backlog as a continuous variable: drift zeros
//! are located by a dense scan plus bisection, and stability is the sign of
//! the drift slope. Boundary equilibria (drift exactly zero at a scan point)
//! are reported, not skipped, so a zero-load channel still has its resting
//! point at n = 0.

use crate::propagation::{tolerance_from_brittleness, ToleranceLaw};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("arrival rate must be finite and nonnegative (got {0})")]
    InvalidArrivalRate(f64),
    #[error("service rate must be finite and positive (got {0})")]
    InvalidServiceRate(f64),
    #[error("queue capacity must be at least 1")]
    InvalidCapacity,
    #[error("utilization {0} is not below 1; the finite-buffer formula needs a stable queue")]
    UnstableQueue(f64),
    #[error("probability out of range: {0}")]
    InvalidProbability(f64),
    #[error("user count must be at least {1} (got {0})")]
    TooFewUsers(u32, u32),
    #[error("backlog {0} must lie in [0, {1}]")]
    BacklogOutOfRange(f64, u32),
    #[error("stop-and-wait needs positive times, loss below 1, and timeout >= rtt")]
    InvalidTiming,
    #[error("adaptation bounds must satisfy 0 < b_min <= b <= b_max <= 1")]
    InvalidAdaptation,
}

/// Finite-buffer M/M/1 queue: arrivals lambda, service mu, room for N packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MM1Params {
    lambda: f64,
    mu: f64,
    capacity_n: u32,
}

impl MM1Params {
    pub fn new(lambda: f64, mu: f64, capacity_n: u32) -> Result<Self, ScenarioError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(ScenarioError::InvalidArrivalRate(lambda));
        }
        if !mu.is_finite() || mu <= 0.0 {
            return Err(ScenarioError::InvalidServiceRate(mu));
        }
        if capacity_n < 1 {
            return Err(ScenarioError::InvalidCapacity);
        }
        Ok(Self {
            lambda,
            mu,
            capacity_n,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn capacity_n(&self) -> u32 {
        self.capacity_n
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }
}

/// P[arriving packet finds room] = sum of rho^n (1-rho) over n < N, i.e.
/// 1 - rho^N. Needs rho < 1; an oversubscribed queue has no such stationary
/// distribution.
pub fn mm1_perf(params: &MM1Params) -> Result<f64, ScenarioError> {
    let rho = params.rho();
    if rho >= 1.0 {
        return Err(ScenarioError::UnstableQueue(rho));
    }
    Ok(1.0 - rho.powi(params.capacity_n as i32))
}

/// One row of the performance-energy table; the energy axis is mu itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MM1Row {
    pub mu: f64,
    pub rho: f64,
    pub perf: Option<f64>,
    pub valid: bool,
}

/// Performance across candidate service rates at fixed load. Rates that
/// leave the queue unstable (or are not positive) yield flagged rows rather
/// than errors so a sweep table keeps its shape.
pub fn mm1_energy_curve(
    lambda: f64,
    mu_values: &[f64],
    capacity_n: u32,
) -> Result<Vec<MM1Row>, ScenarioError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ScenarioError::InvalidArrivalRate(lambda));
    }
    if capacity_n < 1 {
        return Err(ScenarioError::InvalidCapacity);
    }
    Ok(mu_values
        .iter()
        .map(|&mu| {
            let rho = lambda / mu;
            match MM1Params::new(lambda, mu, capacity_n) {
                Ok(params) if rho < 1.0 => MM1Row {
                    mu,
                    rho,
                    perf: Some(mm1_perf(&params).expect("rho < 1")),
                    valid: true,
                },
                _ => MM1Row {
                    mu,
                    rho,
                    perf: None,
                    valid: false,
                },
            }
        })
        .collect())
}

/// Slotted ALOHA with m users: fresh packets transmit with probability p0,
/// backlogged ones retry with probability p1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlohaParams {
    m: u32,
    p0: f64,
    p1: f64,
}

fn check_prob(p: f64) -> Result<f64, ScenarioError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ScenarioError::InvalidProbability(p));
    }
    Ok(p)
}

impl AlohaParams {
    pub fn new(m: u32, p0: f64, p1: f64) -> Result<Self, ScenarioError> {
        if m < 1 {
            return Err(ScenarioError::TooFewUsers(m, 1));
        }
        Ok(Self {
            m,
            p0: check_prob(p0)?,
            p1: check_prob(p1)?,
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }
}

fn check_backlog(params: &AlohaParams, n: f64) -> Result<(), ScenarioError> {
    if !n.is_finite() || n < 0.0 || n > params.m as f64 {
        return Err(ScenarioError::BacklogOutOfRange(n, params.m));
    }
    Ok(())
}

/// Probability that a slot carries exactly one transmission with n of the m
/// users backlogged. n is continuous (the drift analysis interpolates
/// between integer states); count exponents are clamped at zero so the
/// relaxation stays finite at the boundaries.
pub fn aloha_success_prob(params: &AlohaParams, n: f64) -> Result<f64, ScenarioError> {
    check_backlog(params, n)?;
    let m = params.m as f64;
    let (p0, p1) = (params.p0, params.p1);
    let fresh = (m - n) * p0 * (1.0 - p0).powf((m - n - 1.0).max(0.0)) * (1.0 - p1).powf(n);
    let backlogged = n * p1 * (1.0 - p1).powf((n - 1.0).max(0.0)) * (1.0 - p0).powf(m - n);
    Ok(fresh + backlogged)
}

/// Expected backlog change per slot: fresh arrivals in minus successes out.
pub fn aloha_drift(params: &AlohaParams, n: f64) -> Result<f64, ScenarioError> {
    let succ = aloha_success_prob(params, n)?;
    Ok((params.m as f64 - n) * params.p0 - succ)
}

/// A drift zero and whether the backlog is attracted to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub n: f64,
    pub stable: bool,
}

const SCAN_POINTS: usize = 4001;
const BISECT_TOL: f64 = 1e-9;

/// Backlog equilibria over continuous n in [0, m]: dense scan for sign
/// changes and exact zeros, bisection to 1e-9, stability from the local
/// drift slope. drift(0) >= 0 and drift(m) <= 0 guarantee the list is
/// nonempty.
pub fn aloha_equilibria(params: &AlohaParams) -> Result<Vec<Equilibrium>, ScenarioError> {
    if params.m < 2 {
        return Err(ScenarioError::TooFewUsers(params.m, 2));
    }
    let m = params.m as f64;
    let drift = |n: f64| aloha_drift(params, n).expect("scan point within range");
    let last = SCAN_POINTS - 1;
    let grid_point = |i: usize| m * i as f64 / last as f64;
    let step = m / last as f64;

    let values: Vec<f64> = (0..SCAN_POINTS).map(|i| drift(grid_point(i))).collect();
    let mut roots = Vec::new();
    for i in 0..last {
        if values[i] == 0.0 {
            roots.push(grid_point(i));
        } else if values[i] * values[i + 1] < 0.0 {
            let (mut lo, mut hi) = (grid_point(i), grid_point(i + 1));
            let mut f_lo = values[i];
            while hi - lo > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                let f_mid = drift(mid);
                if f_lo * f_mid <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    f_lo = f_mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    if values[last] == 0.0 {
        roots.push(m);
    }

    let mut out: Vec<Equilibrium> = Vec::new();
    let delta = 1e-5 * m;
    for root in roots {
        if out.last().is_some_and(|e| root - e.n < 0.5 * step) {
            continue;
        }
        let lo = (root - delta).max(0.0);
        let hi = (root + delta).min(m);
        let slope = (drift(hi) - drift(lo)) / (hi - lo);
        out.push(Equilibrium {
            n: root,
            stable: slope < 0.0,
        });
    }
    Ok(out)
}

/// Stable-equilibrium count at one (p0, p1) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspCell {
    pub p0: f64,
    pub p1: f64,
    pub stable_count: usize,
}

/// Counts stable equilibria on a (p0, p1) grid; cells with two are the
/// interior of the cusp, where the channel is bistable.
pub fn aloha_cusp_scan(
    m: u32,
    p0_grid: &[f64],
    p1_grid: &[f64],
) -> Result<Vec<CuspCell>, ScenarioError> {
    let mut cells = Vec::with_capacity(p0_grid.len() * p1_grid.len());
    for &p0 in p0_grid {
        for &p1 in p1_grid {
            let params = AlohaParams::new(m, p0, p1)?;
            let stable_count = aloha_equilibria(&params)?
                .iter()
                .filter(|e| e.stable)
                .count();
            cells.push(CuspCell {
                p0,
                p1,
                stable_count,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

impl SweepDirection {
    pub fn label(&self) -> &'static str {
        match self {
            SweepDirection::Up => "up",
            SweepDirection::Down => "down",
        }
    }
}

/// One step of a quasi-static p0 sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisRow {
    pub direction: SweepDirection,
    pub p0: f64,
    pub n_star: f64,
    pub jump: bool,
}

/// Tracked displacement above which a branch transition counts as a jump,
/// as a fraction of m.
pub const JUMP_FRACTION: f64 = 0.05;

/// Quasi-static equilibrium tracking along a p0 path (increasing then
/// decreasing for a hysteresis loop). Starts on the stable branch nearest an
/// empty backlog and follows the nearest stable equilibrium at each step.
/// Any displacement beyond [`JUMP_FRACTION`] of m in one step is flagged as
/// a jump; a branch folding away always produces one, a steep but continuous
/// branch can too if the path is coarse. Direction is inferred from
/// consecutive p0 values.
pub fn aloha_hysteresis(
    m: u32,
    p1: f64,
    p0_path: &[f64],
) -> Result<Vec<HysteresisRow>, ScenarioError> {
    let threshold = JUMP_FRACTION * m as f64;
    let mut rows = Vec::with_capacity(p0_path.len());
    let mut tracked: Option<f64> = None;
    let mut direction = SweepDirection::Up;
    let mut prev_p0 = None;
    for &p0 in p0_path {
        let params = AlohaParams::new(m, p0, p1)?;
        let equilibria = aloha_equilibria(&params)?;
        let stable: Vec<f64> = equilibria
            .iter()
            .filter(|e| e.stable)
            .map(|e| e.n)
            .collect();
        // Degenerate parameter corners can leave only neutral zeros.
        let candidates: Vec<f64> = if stable.is_empty() {
            equilibria.iter().map(|e| e.n).collect()
        } else {
            stable
        };
        let anchor = tracked.unwrap_or(0.0);
        let n_star = candidates
            .iter()
            .copied()
            .min_by(|a, b| {
                (a - anchor)
                    .abs()
                    .partial_cmp(&(b - anchor).abs())
                    .unwrap()
            })
            .expect("equilibria list is never empty");
        let jump = tracked.is_some_and(|prev| (n_star - prev).abs() > threshold);
        if let Some(prev) = prev_p0 {
            if p0 > prev {
                direction = SweepDirection::Up;
            } else if p0 < prev {
                direction = SweepDirection::Down;
            }
        }
        rows.push(HysteresisRow {
            direction,
            p0,
            n_star,
            jump,
        });
        tracked = Some(n_star);
        prev_p0 = Some(p0);
    }
    Ok(rows)
}

/// Stop-and-wait retransmission over a lossy link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopWaitParams {
    loss_p: f64,
    timeout: f64,
    tx_time: f64,
    rtt: f64,
}

impl StopWaitParams {
    pub fn new(loss_p: f64, timeout: f64, tx_time: f64, rtt: f64) -> Result<Self, ScenarioError> {
        let times_ok = tx_time.is_finite()
            && tx_time > 0.0
            && rtt.is_finite()
            && rtt > 0.0
            && timeout.is_finite()
            && timeout >= rtt;
        if !times_ok || !(0.0..1.0).contains(&loss_p) {
            return Err(ScenarioError::InvalidTiming);
        }
        Ok(Self {
            loss_p,
            timeout,
            tx_time,
            rtt,
        })
    }

    pub fn loss_p(&self) -> f64 {
        self.loss_p
    }

    pub fn timeout(&self) -> f64 {
        self.timeout
    }

    pub fn tx_time(&self) -> f64 {
        self.tx_time
    }

    pub fn rtt(&self) -> f64 {
        self.rtt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopWaitMetrics {
    pub expected_tx: f64,
    pub expected_time: f64,
    pub throughput: f64,
}

/// Geometric retransmission count 1/(1-p); every failed attempt costs one
/// timeout, the final success costs transmission plus acknowledgment.
pub fn stopwait_metrics(params: &StopWaitParams) -> StopWaitMetrics {
    let expected_tx = 1.0 / (1.0 - params.loss_p);
    let expected_time = (expected_tx - 1.0) * params.timeout + params.tx_time + params.rtt;
    StopWaitMetrics {
        expected_tx,
        expected_time,
        throughput: 1.0 / expected_time,
    }
}

pub const BRITTLENESS_DECREASE_FACTOR: f64 = 0.5;
pub const BRITTLENESS_INCREASE_FACTOR: f64 = 1.25;

/// Feedback state for tolerance adaptation under a fixed tolerance law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationState {
    law: ToleranceLaw,
    b_current: f64,
    target_exceedance: f64,
    b_min: f64,
    b_max: f64,
}

impl AdaptationState {
    pub fn new(
        law: ToleranceLaw,
        b_current: f64,
        target_exceedance: f64,
        b_min: f64,
        b_max: f64,
    ) -> Result<Self, ScenarioError> {
        if !(b_min > 0.0 && b_min <= b_current && b_current <= b_max && b_max <= 1.0) {
            return Err(ScenarioError::InvalidAdaptation);
        }
        Ok(Self {
            law,
            b_current,
            target_exceedance: check_prob(target_exceedance)?,
            b_min,
            b_max,
        })
    }

    pub fn b(&self) -> f64 {
        self.b_current
    }

    pub fn target_exceedance(&self) -> f64 {
        self.target_exceedance
    }

    /// Tolerance limit implied by the current brittleness; finite because
    /// b >= b_min > 0.
    pub fn t_hi(&self) -> f64 {
        tolerance_from_brittleness(&self.law, self.b_current).expect("b in (0, 1]")
    }
}

/// One adaptation step: too many exceedances halve b (widening t_hi), a
/// comfortable margin (below half the target) raises b by a quarter, and the
/// dead band in between leaves the state alone. b never leaves
/// [b_min, b_max].
pub fn adapt_brittleness(
    state: &AdaptationState,
    observed_exceedance: f64,
) -> Result<AdaptationState, ScenarioError> {
    check_prob(observed_exceedance)?;
    let mut next = *state;
    if observed_exceedance > state.target_exceedance {
        next.b_current = (state.b_current * BRITTLENESS_DECREASE_FACTOR).max(state.b_min);
    } else if observed_exceedance < 0.5 * state.target_exceedance {
        next.b_current = (state.b_current * BRITTLENESS_INCREASE_FACTOR).min(state.b_max);
    }
    Ok(next)
}
