//! Two-parameter Mittag-Leffler function E_{a,b}(z) on the closed negative
//! real axis.
//!
//! Three branches, each used only where it is accurate:
//! - Taylor series with compensated summation when the largest term does not
//!   swamp the result (small |z|);
//! - the algebraic asymptotic expansion when its first omitted term is below
//!   round-off (large |z|);
//! - otherwise a real integral representation with a positive weight,
//!   evaluated by adaptive quadrature.

use super::gamma::rgamma;
use crate::error::{param, Result};
use crate::quad::{integrate_pieces, QuadOpts};
use std::f64::consts::PI;

/// Evaluation parameters; the defaults are used by [`mittag_leffler`].
#[derive(Debug, Clone, Copy)]
pub struct MittagLefflerParams {
    /// Largest |z| for which the series is attempted.
    pub series_radius: f64,
    /// Number of terms of the asymptotic expansion.
    pub asymptotic_terms: usize,
}

impl Default for MittagLefflerParams {
    fn default() -> Self {
        MittagLefflerParams { series_radius: 5.0, asymptotic_terms: 8 }
    }
}

/// Which branch produced a value (exposed for diagnostics and tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlBranch {
    Series,
    Asymptotic,
    Integral,
    Exponential,
}

/// E_{a,b}(z) for 0 < a ≤ 1, b > 0, z ≤ 0.
pub fn mittag_leffler(a: f64, b: f64, z: f64) -> Result<f64> {
    mittag_leffler_with(a, b, z, &MittagLefflerParams::default()).map(|(v, _)| v)
}

/// E_{a,b}(z) with explicit parameters; also reports the branch used.
pub fn mittag_leffler_with(a: f64, b: f64, z: f64, p: &MittagLefflerParams) -> Result<(f64, MlBranch)> {
    if !(a > 0.0 && a <= 1.0) || !(b > 0.0) || !(b.is_finite()) {
        return param(format!("Mittag-Leffler parameters outside 0<a<=1, b>0: a={a}, b={b}"));
    }
    if !(z <= 0.0) {
        return param(format!("Mittag-Leffler argument must be <= 0, got {z}"));
    }
    if p.series_radius <= 0.0 || p.asymptotic_terms == 0 {
        return param("series_radius must be > 0 and asymptotic_terms >= 1");
    }
    let x = -z;
    if x == 0.0 {
        return Ok((rgamma(b), MlBranch::Series));
    }
    if a == 1.0 {
        return Ok(ml_a1(b, x));
    }
    Ok(ml_neg(a, b, x, p))
}

fn ml_neg(a: f64, b: f64, x: f64, p: &MittagLefflerParams) -> (f64, MlBranch) {
    if x <= p.series_radius {
        if let Some(v) = series(a, b, x) {
            return (v, MlBranch::Series);
        }
    }
    if let Some(v) = asymptotic(a, b, x, p.asymptotic_terms) {
        return (v, MlBranch::Asymptotic);
    }
    (integral(a, b, x), MlBranch::Integral)
}

/// Taylor series Σ (-x)^k/Γ(ak+b) with Kahan summation; `None` when the
/// cancellation would cost more than about four digits.
pub fn series(a: f64, b: f64, x: f64) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut pow = 1.0f64;
    let mut max_term = 0.0f64;
    for k in 0..2000 {
        let term = pow * rgamma(a * k as f64 + b);
        max_term = max_term.max(term.abs());
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if k > 5 && term.abs() <= 1e-17 * sum.abs() && pow.abs() < 1.0 / f64::EPSILON {
            // Terms decay factorially once k is past the peak.
            let next = pow * x * rgamma(a * (k + 1) as f64 + b);
            if next.abs() <= term.abs() {
                break;
            }
        }
        pow *= -x;
        if !pow.is_finite() {
            return None;
        }
    }
    if max_term > 1e4 * sum.abs() {
        return None;
    }
    Some(sum)
}

/// Asymptotic expansion Σ_{k=1..K} (-1)^{k-1} x^{-k}/Γ(b-ak); `None` when the
/// first omitted term is not negligible.
pub fn asymptotic(a: f64, b: f64, x: f64, terms: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for k in 1..=terms {
        pow /= x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * pow * rgamma(b - a * k as f64);
    }
    // Truncation estimate: the largest magnitude among the next few terms
    // (single terms may vanish at poles of Γ).
    let mut tail = 0.0f64;
    let mut pw = pow;
    for k in terms + 1..terms + 4 {
        pw /= x;
        tail = tail.max((pw * rgamma(b - a * k as f64)).abs());
    }
    if sum != 0.0 && tail <= 1e-15 * sum.abs() && exp_small(a, x) {
        Some(sum)
    } else {
        None
    }
}

/// For a close to 1 the expansion acquires exponentially small oscillating
/// corrections of size exp(x^{1/a} cos(π/a)); require them below round-off.
fn exp_small(a: f64, x: f64) -> bool {
    let c = (PI / a).cos();
    c < 0.0 && x.powf(1.0 / a) * c < -40.0 || a <= 2.0 / 3.0
}

/// Integral representation for b < 1 + a (0 < a < 1), with reduction
/// E_{a,b}(-x) = (1/Γ(b-a) - E_{a,b-a}(-x))/x otherwise.
pub fn integral(a: f64, b: f64, x: f64) -> f64 {
    if b >= 1.0 + a {
        let inner = integral(a, b - a, x);
        return (rgamma(b - a) - inner) / x;
    }
    // E_{a,b}(-x) = (1/π)∫_0^∞ s^{a-b} e^{-s} [s^a sin(π(1-b)) + x sin(π(1-b+a))]
    //               / (s^{2a} + 2 s^a x cos(πa) + x²) ds
    // Substituting s = v^{1/c}, c = 1+a-b, removes the endpoint power.
    let c = 1.0 + a - b;
    let s1 = (PI * (1.0 - b)).sin();
    let s2 = (PI * (1.0 - b + a)).sin();
    let ca = (PI * a).cos();
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let s = v.powf(1.0 / c);
        let sa = s.powf(a);
        let den = sa * sa + 2.0 * sa * x * ca + x * x;
        (-s).exp() * (sa * s1 + x * s2) / den / c
    };
    let s_max: f64 = 80.0;
    // Breakpoints in s mapped to v; geometric near 0 resolves the scale where
    // s^a is comparable to x.
    let mut pts = vec![0.0];
    let mut s = 1e-12f64;
    while s < s_max {
        pts.push(s.powf(c));
        s *= 4.0;
    }
    pts.push(s_max.powf(c));
    let e = integrate_pieces(f, &pts, QuadOpts::rel(1e-14).with_abs(1e-300));
    e.value / PI
}

/// a = 1: exponential for b = 1; positive integral for b > 1; one step of the
/// recurrence E_{1,b} = 1/Γ(b) + z E_{1,b+1} for b < 1.
fn ml_a1(b: f64, x: f64) -> (f64, MlBranch) {
    if b == 1.0 {
        return ((-x).exp(), MlBranch::Exponential);
    }
    if x <= 1.0 {
        if let Some(v) = series(1.0, b, x) {
            return (v, MlBranch::Series);
        }
    }
    if b > 1.0 {
        // E_{1,b}(-x) = (1/Γ(b-1)) ∫_0^1 e^{-x(1-v)} v^{b-2} dv, v = w^{1/(b-1)}.
        let q = 1.0 / (b - 1.0);
        let f = |w: f64| (-x * (1.0 - w.powf(q))).exp();
        let pts = [0.0, 0.5, 0.9, 0.99, 1.0];
        let e = integrate_pieces(f, &pts, QuadOpts::rel(1e-14).with_abs(1e-300));
        (e.value * q * rgamma(b - 1.0), MlBranch::Integral)
    } else {
        let (next, _) = ml_a1(b + 1.0, x);
        (rgamma(b) - x * next, MlBranch::Integral)
    }
}
