//! Gamma function and its reciprocal on the real line (thin layer over
//! `libm`, adding pole handling and an overflow-free reciprocal).

use std::f64::consts::PI;

/// True when `x` is a non-positive integer (a pole of Γ).
pub fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Γ(x) for real x; returns +∞ at poles and on overflow.
pub fn gamma(x: f64) -> f64 {
    if is_pole(x) {
        return f64::INFINITY;
    }
    libm::tgamma(x)
}

/// ln|Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if is_pole(x) {
        return f64::INFINITY;
    }
    libm::lgamma(x)
}

/// 1/Γ(x), entire: zero at the poles of Γ, no overflow for large |x|.
pub fn rgamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    if x < -170.0 {
        // 1/Γ(x) = sin(πx) Γ(1-x) / π with Γ(1-x) overflowing.
        let s = (PI * x).sin();
        return s.signum() * (ln_gamma(1.0 - x) + s.abs().ln() - PI.ln()).exp();
    }
    1.0 / libm::tgamma(x)
}
