//! Standard normal pdf, cdf, and the inverse Mills ratio.
//!
//! The cdf goes through `libm`'s erfc, which is accurate to a couple of ulps
//! over the whole range; the brittleness formulas need absolute cdf error
//! below 1e-12 and get roughly 1e-16. The inverse Mills ratio phi(a)/Q(a)
//! (with Q the upper tail) is the fragile piece: the naive quotient loses all
//! precision once Q underflows, so past ALPHA_DIRECT it switches to the
//! Laplace continued fraction, which never divides by a tail probability.

/// Threshold above which the tail ratio uses the continued fraction.
const ALPHA_DIRECT: f64 = 8.0;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub(crate) fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal cdf P[Z <= z].
pub(crate) fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Upper tail P[Z > z], kept in relative precision for large z.
pub(crate) fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Backward evaluation of the Laplace continued fraction
/// 1/(a + 1/(a + 2/(a + 3/(...)))). For a > 8 this equals
/// inverse_mills(a) - a to machine precision, with no tail division.
fn laplace_tail(alpha: f64) -> f64 {
    let mut tail = 0.0;
    for k in (1..=64u32).rev() {
        tail = f64::from(k) / (alpha + tail);
    }
    tail
}

/// Inverse Mills ratio pdf(a) / upper_tail(a).
///
/// For a <= 8 the direct quotient is fine (erfc is relative-accurate).
/// Beyond that the continued fraction takes over; it stays finite for
/// arbitrarily large a where the direct quotient would be 0/0 after
/// underflow.
pub(crate) fn inverse_mills(alpha: f64) -> f64 {
    if alpha <= ALPHA_DIRECT {
        pdf(alpha) / upper_tail(alpha)
    } else {
        alpha + laplace_tail(alpha)
    }
}

/// E[Z - a | Z > a] for standard normal Z, i.e. inverse_mills(a) - a,
/// computed without cancellation in the deep tail.
pub(crate) fn std_mean_excess(alpha: f64) -> f64 {
    if alpha <= ALPHA_DIRECT {
        inverse_mills(alpha) - alpha
    } else {
        laplace_tail(alpha)
    }
}
