//! Bessel function J₀ on the real line.
//!
//! |x| ≤ 25: trapezoid rule on J₀(x) = (1/π)∫_0^π cos(x sin θ) dθ, which is
//! spectrally accurate for periodic analytic integrands. Beyond: Hankel
//! asymptotic expansion truncated at its smallest term.

use std::f64::consts::{FRAC_PI_4, PI};

/// J₀(x) to about 1e-14 absolute.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let n = x.ceil() as usize + 24;
        let mut s = 0.0;
        for j in 0..n {
            let th = PI * (j as f64 + 0.5) / n as f64;
            s += (x * th.sin()).cos();
        }
        return s / n as f64;
    }
    // a_k = Π_{j=1..k} (2j-1)² / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let term = a / x.powi(k as i32);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q -= term,
            2 => p -= term,
            _ => q += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
        let j = (k + 1) as f64;
        a *= (2.0 * j - 1.0).powi(2) / (j * 8.0);
    }
    (2.0 / (PI * x)).sqrt() * (p * (x - FRAC_PI_4).cos() - q * (x - FRAC_PI_4).sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Standard tabulated values.
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-13);
        assert!((bessel_j0(2.404_825_557_695_773)).abs() < 1e-13);
    }

    #[test]
    fn branches_agree_at_switch() {
        for &x in &[24.0, 25.0, 26.0, 30.0] {
            let n = x as usize + 24;
            let s: f64 = (0..n).map(|j| (x * (PI * (j as f64 + 0.5) / n as f64).sin()).cos()).sum::<f64>() / n as f64;
            assert!((s - bessel_j0(x)).abs() < 1e-12, "x={x}");
        }
    }
}
