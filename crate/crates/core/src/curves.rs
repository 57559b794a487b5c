//! Performance-vs-stress curves and the area metrics defined on them.
//!
//! A performance curve records how well a system performs as a stress
//! parameter s varies. Given a tolerance region T and a domain of interest,
//! two areas summarize the curve: hardness H, the area inside T, and
//! ductility D, the area outside it. Their ratio H/D is the curve-level
//! brittleness: a tall in-tolerance plateau with nothing beyond the edge is
//! brittle (glass), a long graceful tail past the edge is ductile (steel).
//! D = 0 models perfectly brittle fracture and is reported as an infinite
//! ratio rather than an error.
//!
//! Sensitivity is measured on a family of curves indexed by a design
//! parameter x: gamma(x1, x2) is the signed area between two members, and
//! psi is its partial derivative in the first argument, taken by central
//! difference. Argument order is significant; gamma(x1, x2) = -gamma(x2, x1)
//! holds exactly, as does gamma(x, x) = 0.
//!
//! All areas are trapezoidal integrals on a shared uniform grid (curves are
//! resampled onto it at ingestion; [`DEFAULT_GRID_POINTS`] spans the domain
//! unless the caller picks another resolution). Negative performance is
//! clamped to 0 inside the area metrics only; gamma and psi use raw values.

use thiserror::Error;

/// Grid resolution used when the caller has no reason to pick another.
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// Errors from curve construction and the metrics on curves and families.
#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("state domain must be finite with s_min < s_max (got {0}..{1})")]
    InvalidDomain(f64, f64),
    #[error("tolerance region must be finite with t_lo < t_hi")]
    InvalidTolerance,
    #[error("curve needs at least two samples")]
    TooFewSamples,
    #[error("curve samples must be finite with strictly increasing stress (sample {0})")]
    BadSample(usize),
    #[error("grid needs at least two points (got {0})")]
    GridTooSmall(usize),
    #[error("domain {0}..{1} extends outside the curve's sampled range {2}..{3}")]
    DomainOutsideCurve(f64, f64, f64, f64),
    #[error("tolerance region does not overlap the domain")]
    EmptyOverlap,
    #[error("curve is nonpositive over the whole domain, so the area ratio is undefined")]
    DegenerateCurve,
    #[error("family needs at least two members")]
    TooFewMembers,
    #[error("family member keys must be finite and distinct (key {0})")]
    BadMemberKey(f64),
    #[error("parameter {0} is outside the family's key range {1}..{2}")]
    ParamOutOfRange(f64, f64, f64),
    #[error("step h must be positive and keep x1±h inside the family's key range")]
    InvalidStep,
    #[error("in/out probabilities must lie in [0,1] and sum to 1 within 1e-9")]
    InvalidProbability,
    #[error("hardness and ductility must be nonnegative")]
    NegativeArea,
    #[error("stress must be nonnegative to form a modulus")]
    NegativeStress,
}

/// Closed stress interval the metrics integrate over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDomain {
    s_min: f64,
    s_max: f64,
}

impl StateDomain {
    pub fn new(s_min: f64, s_max: f64) -> Result<Self, CurveError> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(CurveError::InvalidDomain(s_min, s_max));
        }
        Ok(Self { s_min, s_max })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn width(&self) -> f64 {
        self.s_max - self.s_min
    }

    /// i-th of n uniform grid points; endpoints land exactly on the bounds.
    fn grid_point(&self, n: usize, i: usize) -> f64 {
        let last = n - 1;
        if i == 0 {
            return self.s_min;
        }
        if i == last {
            return self.s_max;
        }
        (self.s_min * (last - i) as f64 + self.s_max * i as f64) / last as f64
    }
}

/// Stress interval the system is designed to tolerate. The lower edge is
/// optional; a missing one means unbounded below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceRegion {
    t_lo: Option<f64>,
    t_hi: f64,
}

impl ToleranceRegion {
    /// Tolerance bounded above only.
    pub fn upper(t_hi: f64) -> Result<Self, CurveError> {
        if !t_hi.is_finite() {
            return Err(CurveError::InvalidTolerance);
        }
        Ok(Self { t_lo: None, t_hi })
    }

    /// Tolerance bounded on both sides.
    pub fn bounded(t_lo: f64, t_hi: f64) -> Result<Self, CurveError> {
        if !(t_lo.is_finite() && t_hi.is_finite() && t_lo < t_hi) {
            return Err(CurveError::InvalidTolerance);
        }
        Ok(Self {
            t_lo: Some(t_lo),
            t_hi,
        })
    }

    pub fn t_lo(&self) -> Option<f64> {
        self.t_lo
    }

    pub fn t_hi(&self) -> f64 {
        self.t_hi
    }

    pub fn contains(&self, s: f64) -> bool {
        self.t_lo.map_or(true, |lo| s >= lo) && s <= self.t_hi
    }
}

/// Sampled performance curve: finite values at strictly increasing stresses.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCurve {
    s: Vec<f64>,
    p: Vec<f64>,
}

impl PerformanceCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, CurveError> {
        if samples.len() < 2 {
            return Err(CurveError::TooFewSamples);
        }
        for (i, &(s, p)) in samples.iter().enumerate() {
            if !s.is_finite() || !p.is_finite() {
                return Err(CurveError::BadSample(i));
            }
            if i > 0 && s <= samples[i - 1].0 {
                return Err(CurveError::BadSample(i));
            }
        }
        let (s, p) = samples.into_iter().unzip();
        Ok(Self { s, p })
    }

    /// Samples a closure at `n` uniform points over `dom`.
    pub fn from_fn(
        dom: StateDomain,
        n: usize,
        mut f: impl FnMut(f64) -> f64,
    ) -> Result<Self, CurveError> {
        if n < 2 {
            return Err(CurveError::GridTooSmall(n));
        }
        let samples = (0..n)
            .map(|i| {
                let s = dom.grid_point(n, i);
                (s, f(s))
            })
            .collect();
        Self::new(samples)
    }

    pub fn s_min(&self) -> f64 {
        self.s[0]
    }

    pub fn s_max(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().copied().zip(self.p.iter().copied())
    }

    /// Linear interpolation at `s`, which must lie in the sampled range.
    pub fn value_at(&self, s: f64) -> Result<f64, CurveError> {
        if s < self.s_min() || s > self.s_max() {
            return Err(CurveError::DomainOutsideCurve(
                s,
                s,
                self.s_min(),
                self.s_max(),
            ));
        }
        Ok(self.value_at_unchecked(s))
    }

    fn value_at_unchecked(&self, s: f64) -> f64 {
        let j = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(j) => return self.p[j],
            Err(j) => j.clamp(1, self.s.len() - 1) - 1,
        };
        let t = (s - self.s[j]) / (self.s[j + 1] - self.s[j]);
        self.p[j] + t * (self.p[j + 1] - self.p[j])
    }

    /// Values on the `n`-point uniform grid over `dom`, which must lie inside
    /// the sampled range.
    fn resample(&self, dom: &StateDomain, n: usize) -> Result<Vec<f64>, CurveError> {
        if n < 2 {
            return Err(CurveError::GridTooSmall(n));
        }
        if dom.s_min < self.s_min() || dom.s_max > self.s_max() {
            return Err(CurveError::DomainOutsideCurve(
                dom.s_min,
                dom.s_max,
                self.s_min(),
                self.s_max(),
            ));
        }
        Ok((0..n)
            .map(|i| self.value_at_unchecked(dom.grid_point(n, i)))
            .collect())
    }
}

/// Brittleness summary of one curve over one domain and tolerance.
///
/// `brittleness` is `f64::INFINITY` when ductility is exactly zero (perfectly
/// brittle fracture). `modulus` stays `None` unless a stress/degradation pair
/// was supplied; see [`modulus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrittlenessReport {
    pub hardness: f64,
    pub ductility: f64,
    pub brittleness: f64,
    pub modulus: Option<f64>,
}

impl BrittlenessReport {
    /// True when the curve carries no area beyond the tolerance edge.
    pub fn is_fracture(&self) -> bool {
        self.brittleness.is_infinite()
    }
}

/// Clamped nodes of `curve` on the uniform grid plus the in-tolerance
/// sub-interval [lo, hi] of the domain. Shared by hardness and ductility so
/// the two integrals split the same cells and sum to the full-domain area.
fn clamped_grid(
    curve: &PerformanceCurve,
    tol: &ToleranceRegion,
    dom: &StateDomain,
    grid: usize,
) -> Result<(Vec<f64>, f64, f64), CurveError> {
    let vals: Vec<f64> = curve
        .resample(dom, grid)?
        .into_iter()
        .map(|p| p.max(0.0))
        .collect();
    let lo = tol.t_lo().map_or(dom.s_min, |t| t.max(dom.s_min));
    let hi = tol.t_hi().min(dom.s_max);
    if lo > hi {
        return Err(CurveError::EmptyOverlap);
    }
    Ok((vals, lo, hi))
}

/// Integral of the piecewise-linear interpolant of `vals` over [a, b].
fn grid_integral(dom: &StateDomain, vals: &[f64], a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let n = vals.len();
    let step = dom.width() / (n - 1) as f64;
    let at = |x: f64| -> f64 {
        let u = ((x - dom.s_min) / step).floor();
        let j = (u as usize).min(n - 2);
        let t = (x - dom.grid_point(n, j)) / step;
        vals[j] + t * (vals[j + 1] - vals[j])
    };
    let ja = (((a - dom.s_min) / step).floor() as usize).min(n - 2);
    let jb = (((b - dom.s_min) / step).floor() as usize).min(n - 2);
    if ja == jb {
        return 0.5 * (at(a) + at(b)) * (b - a);
    }
    let mut area = 0.5 * (at(a) + vals[ja + 1]) * (dom.grid_point(n, ja + 1) - a);
    for j in ja + 1..jb {
        area += 0.5 * (vals[j] + vals[j + 1]) * step;
    }
    area += 0.5 * (vals[jb] + at(b)) * (b - dom.grid_point(n, jb));
    area
}

/// Area of max(p, 0) inside the tolerance region, over `dom`.
pub fn hardness(
    curve: &PerformanceCurve,
    tol: &ToleranceRegion,
    dom: &StateDomain,
    grid: usize,
) -> Result<f64, CurveError> {
    let (vals, lo, hi) = clamped_grid(curve, tol, dom, grid)?;
    Ok(grid_integral(dom, &vals, lo, hi))
}

/// Area of max(p, 0) outside the tolerance region, over `dom`.
pub fn ductility(
    curve: &PerformanceCurve,
    tol: &ToleranceRegion,
    dom: &StateDomain,
    grid: usize,
) -> Result<f64, CurveError> {
    let (vals, lo, hi) = clamped_grid(curve, tol, dom, grid)?;
    Ok(grid_integral(dom, &vals, dom.s_min, lo) + grid_integral(dom, &vals, hi, dom.s_max))
}

/// Hardness, ductility, and their ratio in one pass.
pub fn curve_brittleness(
    curve: &PerformanceCurve,
    tol: &ToleranceRegion,
    dom: &StateDomain,
    grid: usize,
) -> Result<BrittlenessReport, CurveError> {
    let (vals, lo, hi) = clamped_grid(curve, tol, dom, grid)?;
    let h = grid_integral(dom, &vals, lo, hi);
    let d = grid_integral(dom, &vals, dom.s_min, lo) + grid_integral(dom, &vals, hi, dom.s_max);
    if h == 0.0 && d == 0.0 {
        return Err(CurveError::DegenerateCurve);
    }
    let brittleness = if d == 0.0 { f64::INFINITY } else { h / d };
    Ok(BrittlenessReport {
        hardness: h,
        ductility: d,
        brittleness,
        modulus: None,
    })
}

/// Expected utility of a design: in-tolerance probability weighs hardness at
/// the normal-operation utility, out-of-tolerance probability weighs
/// ductility at the robust-operation utility.
pub fn utility(
    hardness: f64,
    ductility: f64,
    p_in_tol: f64,
    p_out_tol: f64,
    u_normal: f64,
    u_robust: f64,
) -> Result<f64, CurveError> {
    if hardness < 0.0 || ductility < 0.0 {
        return Err(CurveError::NegativeArea);
    }
    let in_range = (0.0..=1.0).contains(&p_in_tol) && (0.0..=1.0).contains(&p_out_tol);
    if !in_range || (p_in_tol + p_out_tol - 1.0).abs() > 1e-9 {
        return Err(CurveError::InvalidProbability);
    }
    Ok(p_in_tol * hardness * u_normal + p_out_tol * ductility * u_robust)
}

/// Stiffness analogue: stress beyond tolerance over observed degradation.
///
/// `Ok(None)` flags a rigid response (no degradation to divide by), which is
/// information, not a failure.
pub fn modulus(stress: f64, degradation: f64) -> Result<Option<f64>, CurveError> {
    if stress < 0.0 {
        return Err(CurveError::NegativeStress);
    }
    if degradation <= 0.0 {
        return Ok(None);
    }
    Ok(Some(stress / degradation))
}

/// Family of performance curves indexed by a design parameter x, resampled
/// onto one shared uniform grid at construction.
///
/// Between member keys the family is evaluated by linear interpolation of the
/// two bracketing members, point by point; the central differences in [`psi`]
/// rely on this.
#[derive(Debug, Clone)]
pub struct CurveFamily {
    keys: Vec<f64>,
    rows: Vec<Vec<f64>>,
    dom: StateDomain,
    grid: usize,
}

impl CurveFamily {
    pub fn new(
        members: Vec<(f64, PerformanceCurve)>,
        dom: StateDomain,
        grid: usize,
    ) -> Result<Self, CurveError> {
        if members.len() < 2 {
            return Err(CurveError::TooFewMembers);
        }
        let mut members = members;
        members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut keys = Vec::with_capacity(members.len());
        let mut rows = Vec::with_capacity(members.len());
        for (x, curve) in &members {
            if !x.is_finite() || keys.last().is_some_and(|last| x <= last) {
                return Err(CurveError::BadMemberKey(*x));
            }
            keys.push(*x);
            rows.push(curve.resample(&dom, grid)?);
        }
        Ok(Self {
            keys,
            rows,
            dom,
            grid,
        })
    }

    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    pub fn domain(&self) -> &StateDomain {
        &self.dom
    }

    pub fn grid_points(&self) -> usize {
        self.grid
    }

    /// Bracketing member index and interpolation weight for parameter `x`.
    fn locate(&self, x: f64) -> Result<(usize, f64), CurveError> {
        let (first, last) = (self.keys[0], *self.keys.last().unwrap());
        if !x.is_finite() || x < first || x > last {
            return Err(CurveError::ParamOutOfRange(x, first, last));
        }
        if x == last {
            return Ok((self.keys.len() - 2, 1.0));
        }
        let j = self.keys.partition_point(|k| *k <= x) - 1;
        Ok((j, (x - self.keys[j]) / (self.keys[j + 1] - self.keys[j])))
    }

    /// Family value at (x, grid index i) under the interpolation rule.
    fn value(&self, loc: (usize, f64), i: usize) -> f64 {
        let (j, w) = loc;
        (1.0 - w) * self.rows[j][i] + w * self.rows[j + 1][i]
    }
}

/// Signed area between members x1 and x2: the trapezoidal integral of
/// f(x1, s) - f(x2, s) over the family's domain. Order matters, the value is
/// not clamped, and gamma(x, x) = 0 and antisymmetry hold exactly.
pub fn gamma(family: &CurveFamily, x1: f64, x2: f64) -> Result<f64, CurveError> {
    let l1 = family.locate(x1)?;
    let l2 = family.locate(x2)?;
    let n = family.grid;
    let step = family.dom.width() / (n - 1) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let d = family.value(l1, i) - family.value(l2, i);
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        sum += w * d;
    }
    Ok(sum * step)
}

/// Sensitivity of gamma to its first argument: central difference
/// [gamma(x1+h, x2) - gamma(x1-h, x2)] / 2h, so the error falls off as h²
/// wherever the family is smooth in x.
pub fn psi(family: &CurveFamily, x1: f64, x2: f64, h: f64) -> Result<f64, CurveError> {
    if h.is_nan() || h <= 0.0 {
        return Err(CurveError::InvalidStep);
    }
    let (first, last) = (family.keys[0], *family.keys.last().unwrap());
    if x1 - h < first || x1 + h > last {
        return Err(CurveError::InvalidStep);
    }
    let hi = gamma(family, x1 + h, x2)?;
    let lo = gamma(family, x1 - h, x2)?;
    Ok((hi - lo) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn triangle() -> PerformanceCurve {
        // 1 - s/10 sampled every 0.1 over [0, 10].
        PerformanceCurve::from_fn(StateDomain::new(0.0, 10.0).unwrap(), 101, |s| 1.0 - s / 10.0)
            .unwrap()
    }

    #[test]
    fn triangle_areas_match_analytic_values() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(5.0).unwrap();
        let rep = curve_brittleness(&triangle(), &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        // Analytic: integral of 1-s/10 over [0,5] and [5,10].
        assert_abs_diff_eq!(rep.hardness, 3.75, epsilon = 1e-3);
        assert_abs_diff_eq!(rep.ductility, 1.25, epsilon = 1e-3);
        assert_abs_diff_eq!(rep.brittleness, 3.0, epsilon = 1e-2);
        assert!(!rep.is_fracture());
    }

    #[test]
    fn areas_split_the_full_curve_area() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(4.321).unwrap();
        let curve = triangle();
        let h = hardness(&curve, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        let d = ductility(&curve, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        let whole = ToleranceRegion::upper(10.0).unwrap();
        let total = hardness(&curve, &whole, &dom, DEFAULT_GRID_POINTS).unwrap();
        assert_abs_diff_eq!(h + d, total, epsilon = 1e-9);
    }

    #[test]
    fn tolerance_covering_domain_gives_zero_ductility_and_fracture_flag() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(10.0).unwrap();
        let flat =
            PerformanceCurve::from_fn(dom, 11, |_| 1.0).unwrap();
        let rep = curve_brittleness(&flat, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        assert_abs_diff_eq!(rep.hardness, 10.0, epsilon = 1e-9);
        assert_eq!(rep.ductility, 0.0);
        assert!(rep.is_fracture());
    }

    #[test]
    fn negative_performance_contributes_nothing() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(5.0).unwrap();
        // 1 - s/2 goes negative at s = 2; the clamped area over [0,5] is 1.0.
        let curve = PerformanceCurve::from_fn(dom, 1001, |s| 1.0 - s / 2.0).unwrap();
        let h = hardness(&curve, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-4);
        let d = ductility(&curve, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bounded_tolerance_splits_ductility_across_both_sides() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::bounded(2.0, 5.0).unwrap();
        let flat = PerformanceCurve::from_fn(dom, 11, |_| 1.0).unwrap();
        let h = hardness(&flat, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        let d = ductility(&flat, &tol, &dom, DEFAULT_GRID_POINTS).unwrap();
        assert_abs_diff_eq!(h, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d, 7.0, epsilon = 1e-9);
    }

    #[test]
    fn disjoint_tolerance_is_an_error() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let below = ToleranceRegion::upper(-1.0).unwrap();
        let err = hardness(&triangle(), &below, &dom, DEFAULT_GRID_POINTS).unwrap_err();
        assert_eq!(err, CurveError::EmptyOverlap);
        let above = ToleranceRegion::bounded(11.0, 12.0).unwrap();
        let err = ductility(&triangle(), &above, &dom, DEFAULT_GRID_POINTS).unwrap_err();
        assert_eq!(err, CurveError::EmptyOverlap);
    }

    #[test]
    fn nonpositive_curve_is_degenerate() {
        let dom = StateDomain::new(0.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(5.0).unwrap();
        let curve = PerformanceCurve::from_fn(dom, 11, |_| -1.0).unwrap();
        let err = curve_brittleness(&curve, &tol, &dom, DEFAULT_GRID_POINTS).unwrap_err();
        assert_eq!(err, CurveError::DegenerateCurve);
    }

    #[test]
    fn domain_outside_sampled_range_is_an_error() {
        let dom = StateDomain::new(-1.0, 10.0).unwrap();
        let tol = ToleranceRegion::upper(5.0).unwrap();
        assert!(matches!(
            hardness(&triangle(), &tol, &dom, DEFAULT_GRID_POINTS),
            Err(CurveError::DomainOutsideCurve(..))
        ));
    }

    #[test]
    fn utility_weighs_areas_by_probability() {
        // 0.9*3*3 + 0.1*1*8 = 8.9
        let u = utility(3.0, 1.0, 0.9, 0.1, 3.0, 8.0).unwrap();
        assert_abs_diff_eq!(u, 8.9, epsilon = 1e-12);
        assert_eq!(
            utility(3.0, 1.0, 0.7, 0.2, 3.0, 8.0).unwrap_err(),
            CurveError::InvalidProbability
        );
        assert_eq!(
            utility(3.0, 1.0, 1.2, -0.2, 3.0, 8.0).unwrap_err(),
            CurveError::InvalidProbability
        );
        assert_eq!(
            utility(-3.0, 1.0, 0.9, 0.1, 3.0, 8.0).unwrap_err(),
            CurveError::NegativeArea
        );
    }

    #[test]
    fn modulus_flags_rigid_response_instead_of_dividing_by_zero() {
        assert_eq!(modulus(2.0, 0.5).unwrap(), Some(4.0));
        assert_eq!(modulus(2.0, 0.0).unwrap(), None);
        assert_eq!(modulus(2.0, -0.1).unwrap(), None);
        assert_eq!(modulus(-1.0, 0.5).unwrap_err(), CurveError::NegativeStress);
    }

    /// min(1, x/s) family over s in [1, 10] with members at the given keys.
    fn min_family(keys: &[f64], grid: usize) -> CurveFamily {
        let dom = StateDomain::new(1.0, 10.0).unwrap();
        let members = keys
            .iter()
            .map(|&x| {
                let c = PerformanceCurve::from_fn(dom, grid, |s| (x / s).min(1.0)).unwrap();
                (x, c)
            })
            .collect();
        CurveFamily::new(members, dom, grid).unwrap()
    }

    #[test]
    fn gamma_matches_quadrature_of_the_closed_form() {
        let fam = min_family(&[2.0, 4.0], DEFAULT_GRID_POINTS);
        let got = gamma(&fam, 4.0, 2.0).unwrap();
        // Oracle: 10^6-point trapezoid of min(1,4/s) - min(1,2/s) over [1,10].
        let n = 1_000_001;
        let step = 9.0 / (n - 1) as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let s = 1.0 + step * i as f64;
            let d = (4.0 / s).min(1.0) - (2.0 / s).min(1.0);
            oracle += if i == 0 || i == n - 1 { 0.5 * d } else { d };
        }
        oracle *= step;
        // Analytic value 2 + 4 ln(2.5) - 2 ln 5 = 2.4462871026284195.
        assert_abs_diff_eq!(oracle, 2.4462871026284195, epsilon = 1e-10);
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-4);
    }

    #[test]
    fn gamma_is_exactly_zero_and_antisymmetric() {
        let fam = min_family(&[1.5, 2.0, 3.0, 4.0, 5.0], 513);
        for &x in fam.keys() {
            assert_eq!(gamma(&fam, x, x).unwrap(), 0.0);
        }
        // Off-key arguments interpolate and must behave the same way.
        assert_eq!(gamma(&fam, 2.75, 2.75).unwrap(), 0.0);
        let ab = gamma(&fam, 4.0, 2.0).unwrap();
        let ba = gamma(&fam, 2.0, 4.0).unwrap();
        assert_eq!(ab, -ba);
    }

    #[test]
    fn identical_members_give_zero_gamma_everywhere() {
        let dom = StateDomain::new(0.0, 1.0).unwrap();
        let c = PerformanceCurve::from_fn(dom, 33, |s| 1.0 - s).unwrap();
        let fam = CurveFamily::new(
            vec![(0.0, c.clone()), (0.5, c.clone()), (1.0, c)],
            dom,
            65,
        )
        .unwrap();
        for &a in fam.keys() {
            for &b in fam.keys() {
                assert_eq!(gamma(&fam, a, b).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn interpolated_gamma_is_exact_for_families_linear_in_x() {
        // f(x, s) = x * (2 - s): gamma(x1, x2) = (x1 - x2) * integral(2 - s).
        let dom = StateDomain::new(0.0, 1.0).unwrap();
        let members = [1.0, 2.0, 3.0]
            .iter()
            .map(|&x| {
                (
                    x,
                    PerformanceCurve::from_fn(dom, 101, |s| x * (2.0 - s)).unwrap(),
                )
            })
            .collect();
        let fam = CurveFamily::new(members, dom, 101).unwrap();
        let g = gamma(&fam, 2.5, 1.25).unwrap();
        assert_abs_diff_eq!(g, 1.25 * 1.5, epsilon = 1e-12);
        // psi is the integral of 2 - s regardless of h.
        for h in [0.5, 0.25, 0.125] {
            assert_abs_diff_eq!(psi(&fam, 2.0, 1.0, h).unwrap(), 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_central_difference_shows_second_order_decay() {
        // Members placed exactly at the probe points so only the s-grid and
        // the h² truncation contribute; analytic derivative is ln(10/4).
        let mut keys = vec![1.0, 2.0, 5.0];
        for h in [0.01, 0.005, 0.0025] {
            keys.push(4.0 - h);
            keys.push(4.0 + h);
        }
        keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let fam = min_family(&keys, 200_001);
        let d1 = (psi(&fam, 4.0, 2.0, 0.01).unwrap() - (10.0f64 / 4.0).ln()).abs();
        let d2 = (psi(&fam, 4.0, 2.0, 0.005).unwrap() - (10.0f64 / 4.0).ln()).abs();
        let d3 = (psi(&fam, 4.0, 2.0, 0.0025).unwrap() - (10.0f64 / 4.0).ln()).abs();
        assert!(d1 > d2 && d2 > d3, "errors {d1} {d2} {d3} should decay");
        // O(h²): halving h cuts the error by about four.
        assert!(d1 / d2 > 3.0 && d1 / d2 < 5.0, "ratio {}", d1 / d2);
    }

    #[test]
    fn psi_rejects_steps_that_leave_the_family() {
        let fam = min_family(&[2.0, 4.0], 101);
        assert_eq!(
            psi(&fam, 4.0, 2.0, 0.5).unwrap_err(),
            CurveError::InvalidStep
        );
        assert_eq!(
            psi(&fam, 3.0, 2.0, 0.0).unwrap_err(),
            CurveError::InvalidStep
        );
        assert!(matches!(
            gamma(&fam, 5.0, 2.0),
            Err(CurveError::ParamOutOfRange(..))
        ));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(StateDomain::new(1.0, 1.0).is_err());
        assert!(StateDomain::new(0.0, f64::INFINITY).is_err());
        assert!(ToleranceRegion::bounded(5.0, 2.0).is_err());
        assert!(PerformanceCurve::new(vec![(0.0, 1.0)]).is_err());
        assert!(PerformanceCurve::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(PerformanceCurve::new(vec![(0.0, f64::NAN), (1.0, 2.0)]).is_err());
        let dom = StateDomain::new(0.0, 1.0).unwrap();
        let c = PerformanceCurve::from_fn(dom, 11, |_| 1.0).unwrap();
        assert!(CurveFamily::new(vec![(0.0, c.clone())], dom, 11).is_err());
        assert!(CurveFamily::new(vec![(0.0, c.clone()), (0.0, c)], dom, 11).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_curve() -> impl Strategy<Value = PerformanceCurve> {
            proptest::collection::vec(-2.0f64..2.0, 2..40).prop_map(|p| {
                let samples = p
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| (i as f64 * 0.25, v))
                    .collect();
                PerformanceCurve::new(samples).unwrap()
            })
        }

        proptest! {
            #[test]
            fn areas_are_nonnegative_and_additive(
                curve in arb_curve(),
                cut in 0.0f64..1.0,
            ) {
                let dom = StateDomain::new(0.0, curve.s_max()).unwrap();
                let t_hi = dom.s_min() + cut * dom.width();
                let tol = ToleranceRegion::upper(t_hi).unwrap();
                let h = hardness(&curve, &tol, &dom, 257).unwrap();
                let d = ductility(&curve, &tol, &dom, 257).unwrap();
                prop_assert!(h >= 0.0 && d >= 0.0);
                let whole = ToleranceRegion::upper(dom.s_max()).unwrap();
                let total = hardness(&curve, &whole, &dom, 257).unwrap();
                prop_assert!((h + d - total).abs() <= 1e-9 * total.max(1.0));
            }

            #[test]
            fn gamma_antisymmetry_is_exact(
                seed in proptest::collection::vec(-1.0f64..1.0, 4),
                a in 0.0f64..3.0,
                b in 0.0f64..3.0,
            ) {
                let dom = StateDomain::new(0.0, 1.0).unwrap();
                let members = [0.0, 1.0, 2.0, 3.0]
                    .iter()
                    .zip(&seed)
                    .map(|(&x, &v)| {
                        let c = PerformanceCurve::from_fn(
                            dom, 65, |s| v + x * s - s * s * v,
                        ).unwrap();
                        (x, c)
                    })
                    .collect();
                let fam = CurveFamily::new(members, dom, 129).unwrap();
                let ab = gamma(&fam, a, b).unwrap();
                let ba = gamma(&fam, b, a).unwrap();
                prop_assert_eq!(ab, -ba);
                prop_assert_eq!(gamma(&fam, a, a).unwrap(), 0.0);
            }
        }
    }
}
