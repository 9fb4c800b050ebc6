//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15), Gauss–Legendre
//! rules and Wynn's epsilon acceleration for alternating tails.

use crate::error::{FracError, Result};
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

impl QuadOpts {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOpts { rel_tol, ..Default::default() }
    }
    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

/// Integral value with an error estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate { value: self.value + o.value, error: self.error + o.error, evals: self.evals + o.evals }
    }
}

/// Single 15-point Kronrod panel with embedded 7-point Gauss error estimate.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    let value = resk * h;
    let error = ((resk - resg) * h).abs();
    Estimate { value, error, evals: 15 }
}

#[derive(PartialEq)]
struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

impl PartialEq for Estimate {
    fn eq(&self, o: &Self) -> bool {
        self.value == o.value && self.error == o.error
    }
}

/// Globally adaptive Gauss–Kronrod integration on a finite interval.
///
/// Returns the best estimate even when the tolerance is not met; the caller
/// inspects `error` (see [`integrate_checked`]).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOpts) -> Estimate {
    if a == b {
        return Estimate::default();
    }
    let first = gk15(&mut f, a, b);
    let mut total = first;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, est: first });
    let mut evals = first.evals;
    while heap.len() < opts.max_intervals {
        let tol = opts.abs_tol.max(opts.rel_tol * total.value.abs());
        if total.error <= tol {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let l = gk15(&mut f, worst.a, m);
        let r = gk15(&mut f, m, worst.b);
        evals += 30;
        total.value += l.value + r.value - worst.est.value;
        total.error += l.error + r.error - worst.est.error;
        heap.push(Panel { a: worst.a, b: m, est: l });
        heap.push(Panel { a: m, b: worst.b, est: r });
    }
    // Re-sum in a fixed order to avoid drift from incremental updates.
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = panels.iter().map(|p| p.est.value).sum();
    let error = panels.iter().map(|p| p.est.error).sum();
    Estimate { value, error, evals }
}

/// Adaptive integration that fails when the requested tolerance is missed by
/// more than a factor of 100.
pub fn integrate_checked<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<Estimate> {
    let e = integrate(f, a, b, opts);
    let tol = opts.abs_tol.max(opts.rel_tol * e.value.abs());
    if !e.value.is_finite() || e.error > 100.0 * tol.max(1e-300) && e.error > 1e-14 * e.value.abs().max(1e-300) {
        return Err(FracError::Numeric(format!(
            "quadrature on [{a}, {b}] reached error {:.3e} (tolerance {:.3e})",
            e.error, tol
        )));
    }
    Ok(e)
}

/// Sum of adaptive integrals over consecutive breakpoints.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], opts: QuadOpts) -> Estimate {
    let mut total = Estimate::default();
    for w in points.windows(2) {
        if w[1] > w[0] {
            total = total + integrate(&mut f, w[0], w[1], opts);
        }
    }
    total
}

/// Geometric breakpoints between `lo` and `hi` (both > 0) with the given ratio.
pub fn geometric_points(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut x = lo;
    while x * ratio < hi {
        x *= ratio;
        pts.push(x);
    }
    pts.push(hi);
    pts
}

/// Integral over `[a, ∞)` of a function decaying at least like `x^{-1-ε}`,
/// by geometric panels until the panel contribution is negligible.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOpts) -> Estimate {
    let mut lo = a;
    let mut width = a.abs().max(1.0);
    let mut total = Estimate::default();
    for _ in 0..400 {
        let hi = lo + width;
        let piece = integrate(&mut f, lo, hi, opts);
        total = total + piece;
        if piece.value.abs() <= 1e-17 * total.value.abs().max(1e-300) || piece.value == 0.0 && lo > a + 50.0 {
            break;
        }
        lo = hi;
        width *= 2.0;
    }
    total
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed Gauss–Legendre rule mapped to `[a, b]`.
pub struct GaussRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        GaussRule { x, w }
    }
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }
    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.x.iter().zip(&self.w).map(move |(x, w)| (c + h * x, w * h))
    }
}

/// Wynn epsilon extrapolation of a sequence of partial sums.
pub fn wynn_epsilon(partial: &[f64]) -> f64 {
    let n = partial.len();
    if n < 3 {
        return *partial.last().unwrap_or(&0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial.to_vec();
    let mut best = cur[n - 1];
    let mut best_diff = f64::INFINITY;
    let mut k = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            let v = if d == 0.0 { f64::INFINITY } else { prev[i + 1] + 1.0 / d };
            next.push(v);
        }
        k += 1;
        if k % 2 == 0 {
            // Even columns hold extrapolated values.
            for i in 0..next.len().saturating_sub(1) {
                let diff = (next[i + 1] - next[i]).abs();
                if next[i + 1].is_finite() && diff < best_diff {
                    best_diff = diff;
                    best = next[i + 1];
                }
            }
        }
        prev = cur;
        cur = next;
        if cur.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = GaussRule::new(8);
        let v = r.integrate(|x| x.powi(15) + x.powi(14), 0.0, 1.0);
        assert!((v - (1.0 / 16.0 + 1.0 / 15.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let e = integrate(|x| x.powf(-0.7), 0.0, 1.0, QuadOpts::rel(1e-10));
        assert!((e.value - 1.0 / 0.3).abs() < 1e-8, "{}", e.value);
    }

    #[test]
    fn semi_infinite_power_tail() {
        let e = integrate_to_inf(|x| x.powf(-1.5), 1.0, QuadOpts::rel(1e-12));
        assert!((e.value - 2.0).abs() < 1e-9, "{}", e.value);
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=20)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        let v = wynn_epsilon(&sums);
        assert!((v - 2f64.ln()).abs() < 1e-10, "{v}");
    }
}
