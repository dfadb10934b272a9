//! Multiplicative Chernoff corrections and the principal Lambert W branch.
//!
//! For an expectation `x` and failure probability `eps` the upper correction
//! `delta` solves `[e^delta / (1+delta)^(1+delta)]^x = eps`; the lower one
//! solves `[e^-delta / (1-delta)^(1-delta)]^x = eps` with `delta` in (0, 1).
//! Taking logs, both reduce to `phi(delta) = -ln(eps)/x` for
//!
//! ```text
//! upper: phi(d) = (1+d) ln(1+d) - d
//! lower: psi(d) = d + (1-d) ln(1-d)
//! ```
//!
//! The upper correction also has the closed form
//! `delta = exp(1 + W0(-(x + ln eps)/(e x))) - 1`.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Slack allowed below the branch point -1/e before W0 reports an error.
pub const BRANCH_SLACK: f64 = 1e-12;

const SERIES_CUTOFF: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            other => Err(format!("unknown side `{other}` (expected upper or lower)")),
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffQuery {
    /// Expectation, > 0.
    pub x: f64,
    /// Failure probability in (0, 1].
    pub epsilon: f64,
    pub side: Side,
}

impl ChernoffQuery {
    pub fn new(x: f64, epsilon: f64, side: Side) -> Result<Self> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::param("x", format!("expectation must be positive, got {x}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
        }
        Ok(Self { x, epsilon, side })
    }

    pub fn upper(x: f64, epsilon: f64) -> Result<Self> {
        Self::new(x, epsilon, Side::Upper)
    }

    pub fn lower(x: f64, epsilon: f64) -> Result<Self> {
        Self::new(x, epsilon, Side::Lower)
    }

    /// -ln(eps)/x, the common right-hand side of both log-forms.
    fn level(&self) -> f64 {
        -self.epsilon.ln() / self.x
    }
}

/// (1+d) ln(1+d) - d, accurate for small d.
pub(crate) fn upper_rate(d: f64) -> f64 {
    if d.abs() < SERIES_CUTOFF {
        // sum_{k>=2} (-1)^k d^k / (k (k-1))
        let mut term = d * d;
        let mut sum = 0.0;
        for k in 2..40 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / (kf * (kf - 1.0));
            term *= d;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (1.0 + d) * d.ln_1p() - d
    }
}

/// d + (1-d) ln(1-d) on [0, 1].
pub(crate) fn lower_rate(d: f64) -> f64 {
    if d >= 1.0 {
        return 1.0;
    }
    if d < SERIES_CUTOFF {
        // sum_{k>=2} d^k / (k (k-1))
        let mut term = d * d;
        let mut sum = 0.0;
        for k in 2..40 {
            let kf = k as f64;
            sum += term / (kf * (kf - 1.0));
            term *= d;
            if term < 1e-18 * sum {
                break;
            }
        }
        sum
    } else {
        d + (1.0 - d) * (-d).ln_1p()
    }
}

/// Bisection on an increasing function until the bracket collapses to
/// adjacent floats.
pub(crate) fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Chernoff correction `delta` by bisection on the log-form of the bound.
///
/// Lower side fails with [`Error::NoSolution`] when `eps < e^-x`.
pub fn chernoff_delta_numeric(q: &ChernoffQuery) -> Result<f64> {
    let level = q.level();
    if level == 0.0 {
        return Ok(0.0);
    }
    match q.side {
        Side::Upper => {
            let mut hi = f64::max(10.0, 3.0 * (1.0 / q.epsilon).ln() / q.x + 10.0);
            while upper_rate(hi) < level {
                hi *= 2.0;
                if !hi.is_finite() {
                    return Err(Error::NoSolution {
                        x: q.x,
                        epsilon: q.epsilon,
                    });
                }
            }
            Ok(bisect_increasing(|d| upper_rate(d) - level, 0.0, hi))
        }
        Side::Lower => {
            if level > 1.0 {
                return Err(Error::NoSolution {
                    x: q.x,
                    epsilon: q.epsilon,
                });
            }
            Ok(bisect_increasing(|d| lower_rate(d) - level, 0.0, 1.0))
        }
    }
}

/// Upper correction from the Lambert-W closed form.
///
/// The W0 argument `-(x + ln eps)/(e x)` sits within `-ln(eps)/(e x)` of
/// the branch point, so it is handed to the solver as that offset rather
/// than as a rounded absolute value.
pub fn chernoff_delta_closed_form(x: f64, epsilon: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) || !(epsilon > 0.0) {
        return Err(Error::param(
            "x/epsilon",
            format!("need x > 0 and eps > 0, got ({x}, {epsilon})"),
        ));
    }
    let offset = -epsilon.ln() / x;
    if offset < 0.0 {
        return Err(Error::OutOfDomain(-(x + epsilon.ln()) / (E * x)));
    }
    Ok(w0_plus_one(offset).exp_m1())
}

/// Principal branch W0(y): the w >= -1 with w e^w = y.
pub fn lambert_w0(y: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if y.is_nan() || y < branch - BRANCH_SLACK {
        return Err(Error::OutOfDomain(y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let offset = (1.0 + E * y).max(0.0);
    if offset < 0.5 {
        return Ok(w0_plus_one(offset) - 1.0);
    }
    if y.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if y < 0.0 {
        y - y * y + 1.5 * y * y * y
    } else {
        let l = y.ln_1p();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// 1 + W0(y) for `y = (p - 1)/e`, solving `1 - (1 - t) e^t = p` for t >= 0
/// by Halley iteration. Exact at the branch point (p = 0 gives t = 0).
fn w0_plus_one(p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let g = |t: f64| -> f64 {
        if t.abs() < SERIES_CUTOFF {
            // sum_{k>=2} (k-1) t^k / k!
            let mut term = t * t / 2.0;
            let mut sum = 0.0;
            for k in 2..40 {
                sum += (k as f64 - 1.0) * term;
                term *= t / (k as f64 + 1.0);
                if term.abs() < 1e-19 * sum.abs() {
                    break;
                }
            }
            sum
        } else {
            1.0 - (1.0 - t) * t.exp()
        }
    };
    let mut t = if p < 1.0 {
        let s = (2.0 * p).sqrt();
        s - s * s / 3.0 + 11.0 * s * s * s / 72.0
    } else {
        let y = (p - 1.0) / E;
        let l = y.ln_1p();
        1.0 + l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    };
    for _ in 0..100 {
        let et = t.exp();
        let f = g(t) - p;
        let d1 = t * et;
        let d2 = (1.0 + t) * et;
        let step = 2.0 * f * d1 / (2.0 * d1 * d1 - f * d2);
        if !step.is_finite() {
            break;
        }
        t -= step;
        if step.abs() <= 1e-16 * t.abs() {
            break;
        }
    }
    t
}

/// Bound value: `x (1 + delta_U)` upper, `x (1 - delta_L)` lower. A lower
/// query without a solution clamps to 0.
pub fn bound_value(q: &ChernoffQuery) -> f64 {
    match q.side {
        Side::Upper => {
            let delta = chernoff_delta_numeric(q).expect("upper Chernoff equation always has a root");
            q.x * (1.0 + delta)
        }
        Side::Lower => match chernoff_delta_numeric(q) {
            Ok(delta) => q.x * (1.0 - delta),
            Err(_) => 0.0,
        },
    }
}

/// Upper bound with the closed-form correction; used on the hot path.
pub fn upper_bound_closed_form(x: f64, epsilon: f64) -> Result<f64> {
    Ok(x * (1.0 + chernoff_delta_closed_form(x, epsilon)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Residual of the original (exponentiated) equation, relative to eps.
    fn residual(q: &ChernoffQuery, delta: f64) -> f64 {
        let lhs = match q.side {
            Side::Upper => (q.x * (delta - (1.0 + delta) * delta.ln_1p())).exp(),
            Side::Lower => (q.x * (-delta - (1.0 - delta) * (-delta).ln_1p())).exp(),
        };
        (lhs - q.epsilon).abs() / q.epsilon
    }

    #[test]
    fn rate_series_matches_direct_formula_away_from_zero() {
        for d in [0.05, 0.09, 0.099] {
            assert!(rel(upper_rate(d), (1.0 + d) * f64::ln_1p(d) - d) < 1e-13);
            assert!(rel(lower_rate(d), d + (1.0 - d) * f64::ln_1p(-d)) < 1e-13);
        }
    }

    #[test]
    fn epsilon_one_gives_zero_delta() {
        let q = ChernoffQuery::upper(100.0, 1.0).unwrap();
        assert_eq!(chernoff_delta_numeric(&q).unwrap(), 0.0);
        assert_eq!(chernoff_delta_closed_form(100.0, 1.0).unwrap(), 0.0);
        assert_eq!(bound_value(&q), 100.0);
    }

    #[test]
    fn delta_vanishes_as_epsilon_approaches_one() {
        let mut prev = f64::INFINITY;
        for eps in [0.5, 0.9, 0.99, 0.999999] {
            let d = chernoff_delta_numeric(&ChernoffQuery::upper(10.0, eps).unwrap()).unwrap();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn large_x_matches_gaussian_leading_order() {
        let (x, eps) = (1e6, 1e-10);
        let d = chernoff_delta_numeric(&ChernoffQuery::upper(x, eps).unwrap()).unwrap();
        let leading = (2.0 * (1.0 / eps).ln() / x).sqrt();
        assert!(rel(d, leading) < 0.01, "{d} vs {leading}");
        assert!(residual(&ChernoffQuery::upper(x, eps).unwrap(), d) < 1e-12);
    }

    #[test]
    fn plug_back_residuals() {
        for (x, eps) in [(100.0, 1e-6), (1e3, 1e-10), (5.0, 0.3), (40.0, 1e-15)] {
            let q = ChernoffQuery::upper(x, eps).unwrap();
            assert!(residual(&q, chernoff_delta_numeric(&q).unwrap()) <= 1e-12);
            let q = ChernoffQuery::lower(x, eps).unwrap();
            if let Ok(d) = chernoff_delta_numeric(&q) {
                assert!(d > 0.0 && d < 1.0);
                assert!(residual(&q, d) <= 1e-12);
            }
        }
    }

    #[test]
    fn lower_side_without_solution() {
        // eps < e^{-x}
        let q = ChernoffQuery::lower(2.0, 1e-3).unwrap();
        assert!(matches!(chernoff_delta_numeric(&q), Err(Error::NoSolution { .. })));
        assert_eq!(bound_value(&q), 0.0);
    }

    #[test]
    fn closed_form_matches_numeric() {
        for (x, eps) in [(1e4, 1e-10), (50.0, 1e-6), (10.0, 1e-15), (1e12, 0.1), (0.01, 1e-10)] {
            let numeric = chernoff_delta_numeric(&ChernoffQuery::upper(x, eps).unwrap()).unwrap();
            let closed = chernoff_delta_closed_form(x, eps).unwrap();
            assert!(rel(closed, numeric) <= 1e-10, "x={x} eps={eps}: {closed} vs {numeric}");
        }
    }

    #[test]
    fn closed_form_rejects_epsilon_above_one() {
        assert!(matches!(
            chernoff_delta_closed_form(10.0, 2.0),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn bounds_bracket_expectation() {
        let (x, eps) = (1e6, 1e-10);
        assert!(bound_value(&ChernoffQuery::upper(x, eps).unwrap()) > x);
        assert!(bound_value(&ChernoffQuery::lower(x, eps).unwrap()) < x);
    }

    #[test]
    fn lambert_known_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(-1.0 / E).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!(matches!(lambert_w0(-0.5), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn branch_point_exact_through_offset() {
        assert_eq!(w0_plus_one(0.0), 0.0);
        // near the branch point 1 + W0 ~ sqrt(2p)
        let p = 1e-20;
        assert!(rel(w0_plus_one(p), (2.0 * p).sqrt()) < 1e-9);
    }

    #[test]
    fn bound_value_increases_on_grid() {
        let eps = 1e-10;
        let xs: Vec<f64> = (0..60).map(|i| 10f64.powf(-2.0 + 0.2 * i as f64)).collect();
        for w in xs.windows(2) {
            let a = bound_value(&ChernoffQuery::upper(w[0], eps).unwrap());
            let b = bound_value(&ChernoffQuery::upper(w[1], eps).unwrap());
            assert!(a < b);
        }
    }

    proptest! {
        #[test]
        fn lambert_defining_identity(y in (-1.0 / E)..1e3) {
            let w = lambert_w0(y).unwrap();
            prop_assert!(w >= -1.0);
            let back = w * w.exp();
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1e-300), "y={} w={} back={}", y, w, back);
        }

        #[test]
        fn lambert_small_arguments(y in -1e-6f64..1e-6) {
            let w = lambert_w0(y).unwrap();
            prop_assert!((w * w.exp() - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }
}
