//! Radial Lévy kernels 𝒥 and their symbols
//!   m(ξ) = ∫ (1 − cos(z·ξ)) 𝒥(z) dz.
//!
//! In one dimension the integrand is written as 4 sin²(ξr/2)𝒥(r), which has
//! no cancellation near r = 0; in two dimensions the angular average gives
//! 2π∫(1 − J₀(ξr))𝒥(r) r dr with a series for 1 − J₀ at small argument.
//! Panels follow half-periods of the oscillation; beyond a cut R₀ the
//! integral splits into the tail mass (monotone) and an oscillatory tail
//! summed by half-periods with Wynn acceleration.

use crate::error::{FracError, Result};
use crate::quad::{integrate, integrate_pieces, integrate_to_inf, wynn_epsilon, QuadOpts};
use crate::special::{bessel_j0, gamma};
use crate::time_kernels::ScalarFn;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevyKind {
    Stable,
    CompactSupport,
    IntegrableTail,
    Custom,
}

/// Radial Lévy kernel in dimension N ∈ {1, 2}.
#[derive(Clone)]
pub struct LevyKernel {
    pub name: String,
    pub dim: usize,
    pub kind: LevyKind,
    profile: ScalarFn,
    /// Singularity exponent at the origin, 𝒥 ~ |z|^{−N−β}.
    pub beta: Option<f64>,
    /// Upper tail exponent γ (None: no declaration).
    pub gamma_tail: Option<f64>,
    /// Lower tail exponent ω.
    pub omega_tail: Option<f64>,
    /// Radius beyond which the profile is zero or below 1e-22 of its scale.
    pub cutoff: Option<f64>,
    /// Radii where the profile has kinks or jumps.
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for LevyKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyKernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("beta", &self.beta)
            .field("gamma_tail", &self.gamma_tail)
            .field("omega_tail", &self.omega_tail)
            .finish()
    }
}

/// Names accepted by [`LevyKernel::from_catalog`].
pub const LEVY_CATALOG: &[&str] = &["stable", "truncated", "tempered", "gaussian", "mixed", "box"];

fn check_dim(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(FracError::Unsupported(format!("dimension N = {n} (supported: 1, 2)")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(FracError::Parameter(format!("beta must lie in (0, 2), got {beta}")))
    }
}

/// Normalizing constant c_{N,β} making c|z|^{−N−β} the kernel of (−Δ)^{β/2}:
/// the reciprocal of the unnormalized symbol at |ξ| = 1.
pub fn stable_constant(dim: usize, beta: f64) -> Result<f64> {
    check_dim(dim)?;
    check_beta(beta)?;
    let raw = LevyKernel::raw("stable_raw", dim, LevyKind::Stable, Arc::new(move |r: f64| r.powf(-(dim as f64) - beta)));
    let m1 = raw.symbol(1.0)?;
    Ok(1.0 / m1)
}

impl LevyKernel {
    fn raw(name: &str, dim: usize, kind: LevyKind, profile: ScalarFn) -> Self {
        LevyKernel {
            name: name.into(),
            dim,
            kind,
            profile,
            beta: None,
            gamma_tail: None,
            omega_tail: None,
            cutoff: None,
            breakpoints: vec![1.0],
        }
    }

    /// Custom kernel from a radial profile; checked for admissibility.
    pub fn custom(name: &str, dim: usize, profile: ScalarFn, beta: Option<f64>, gamma_tail: Option<f64>, omega_tail: Option<f64>) -> Result<Self> {
        check_dim(dim)?;
        let mut k = LevyKernel::raw(name, dim, LevyKind::Custom, profile);
        k.beta = beta;
        k.gamma_tail = gamma_tail;
        k.omega_tail = omega_tail;
        k.check_admissible()?;
        Ok(k)
    }

    /// c_{N,β}|z|^{−N−β}: m(ξ) = |ξ|^β.
    pub fn stable(dim: usize, beta: f64) -> Result<Self> {
        let c = stable_constant(dim, beta)?;
        let n = dim as f64;
        let mut k = LevyKernel::raw("stable", dim, LevyKind::Stable, Arc::new(move |r: f64| c * r.powf(-n - beta)));
        k.beta = Some(beta);
        k.gamma_tail = Some(beta);
        k.omega_tail = Some(beta);
        Ok(k)
    }

    /// Stable kernel restricted to |z| < 1 (finite second moment: γ = ω = 2).
    pub fn truncated_stable(dim: usize, beta: f64) -> Result<Self> {
        let c = stable_constant(dim, beta)?;
        let n = dim as f64;
        let mut k = LevyKernel::raw("truncated", dim, LevyKind::CompactSupport, Arc::new(move |r: f64| if r < 1.0 { c * r.powf(-n - beta) } else { 0.0 }));
        k.beta = Some(beta);
        k.gamma_tail = Some(2.0);
        k.omega_tail = Some(2.0);
        k.cutoff = Some(1.0);
        Ok(k)
    }

    /// Stable kernel times e^{−|z|} (every tail moment finite).
    pub fn tempered(dim: usize, beta: f64) -> Result<Self> {
        let c = stable_constant(dim, beta)?;
        let n = dim as f64;
        let mut k = LevyKernel::raw("tempered", dim, LevyKind::Custom, Arc::new(move |r: f64| c * r.powf(-n - beta) * (-r).exp()));
        k.beta = Some(beta);
        k.gamma_tail = Some(f64::INFINITY);
        k.omega_tail = Some(2.0);
        k.cutoff = Some(60.0);
        Ok(k)
    }

    /// Standard Gaussian density (‖𝒥‖₁ = 1): m(ξ) = 1 − e^{−|ξ|²/2}.
    pub fn gaussian(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let c = (2.0 * PI).powf(-(dim as f64) / 2.0);
        let mut k = LevyKernel::raw("gaussian", dim, LevyKind::IntegrableTail, Arc::new(move |r: f64| c * (-0.5 * r * r).exp()));
        k.gamma_tail = Some(2.0);
        k.omega_tail = Some(2.0);
        k.cutoff = Some(12.0);
        k.breakpoints = vec![1.0, 2.0, 4.0];
        Ok(k)
    }

    /// c|z|^{−N−β} for |z| < 1, c|z|^{−N−ω} for |z| ≥ 1 (continuous), with
    /// c normalizing m(1) = 1.
    pub fn mixed(dim: usize, beta: f64, omega: f64) -> Result<Self> {
        check_dim(dim)?;
        check_beta(beta)?;
        check_beta(omega)?;
        let n = dim as f64;
        let shape: ScalarFn = Arc::new(move |r: f64| if r < 1.0 { r.powf(-n - beta) } else { r.powf(-n - omega) });
        let raw = LevyKernel::raw("mixed_raw", dim, LevyKind::Custom, shape);
        let c = 1.0 / raw.symbol(1.0)?;
        let mut k = LevyKernel::raw("mixed", dim, LevyKind::Custom, Arc::new(move |r: f64| c * (raw.profile)(r)));
        k.beta = Some(beta);
        k.gamma_tail = Some(omega);
        k.omega_tail = Some(omega);
        Ok(k)
    }

    /// ½·1_{[−1,1]} in one dimension: m(ξ) = 1 − sin ξ/ξ.
    pub fn box1d() -> Self {
        let mut k = LevyKernel::raw("box", 1, LevyKind::CompactSupport, Arc::new(|r: f64| if r <= 1.0 { 0.5 } else { 0.0 }));
        k.gamma_tail = Some(2.0);
        k.omega_tail = Some(2.0);
        k.cutoff = Some(1.0);
        k
    }

    /// Catalog lookup; `beta` is used by the singular kernels, `omega` by
    /// `mixed` only.
    pub fn from_catalog(name: &str, dim: usize, beta: f64, omega: Option<f64>) -> Result<Self> {
        match name {
            "stable" => LevyKernel::stable(dim, beta),
            "truncated" => LevyKernel::truncated_stable(dim, beta),
            "tempered" => LevyKernel::tempered(dim, beta),
            "gaussian" => LevyKernel::gaussian(dim),
            "mixed" => LevyKernel::mixed(dim, beta, omega.unwrap_or(0.8)),
            "box" if dim == 1 => Ok(LevyKernel::box1d()),
            "box" => Err(FracError::Unsupported("box kernel is one-dimensional".into())),
            _ => Err(FracError::Config(format!("unknown Lévy kernel '{name}' (known: {})", LEVY_CATALOG.join(", ")))),
        }
    }

    /// 𝒥 at radius r > 0.
    pub fn profile(&self, r: f64) -> f64 {
        (self.profile)(r)
    }

    /// γ̄ = min{γ, 2}; undeclared γ counts as 2 only for kernels with finite
    /// second moment, otherwise it is an error at the call site.
    pub fn gamma_bar(&self) -> Option<f64> {
        self.gamma_tail.map(|g| g.min(2.0))
    }

    /// ϖ = min{ω, 2}.
    pub fn varpi(&self) -> Option<f64> {
        self.omega_tail.map(|w| w.min(2.0))
    }

    /// Lévy integrability ∫min{1,|z|²}𝒥 < ∞, nonnegativity, and
    /// monotonicity on r ≥ 1 (sampled).
    pub fn check_admissible(&self) -> Result<()> {
        let n = self.dim as i32;
        let opts = QuadOpts::rel(1e-8).with_abs(1e-300);
        let mut pts: Vec<f64> = (0..=60).rev().map(|j| 0.5f64.powi(j)).collect();
        pts.insert(0, 0.0);
        let inner = integrate_pieces(|r| r.powi(n + 1) * self.profile(r), &pts, opts).value;
        let outer = match self.cutoff {
            Some(rc) if rc <= 1.0 => 0.0,
            Some(rc) => integrate(|r| r.powi(n - 1) * self.profile(r), 1.0, rc, opts).value,
            None => integrate_to_inf(|r| r.powi(n - 1) * self.profile(r), 1.0, opts).value,
        };
        if !(inner.is_finite() && outer.is_finite()) || inner + outer > 1e12 {
            return Err(FracError::Admissibility(format!("kernel '{}' fails Lévy integrability", self.name)));
        }
        let mut prev = f64::INFINITY;
        for j in 0..=200 {
            let r = 10f64.powf(-4.0 + 0.04 * j as f64);
            let v = self.profile(r);
            if !(v >= 0.0) {
                return Err(FracError::Admissibility(format!("kernel '{}' negative at r = {r}", self.name)));
            }
            if r >= 1.0 && v > prev * (1.0 + 1e-12) {
                return Err(FracError::Admissibility(format!("kernel '{}' not monotone at r = {r}", self.name)));
            }
            prev = v;
        }
        Ok(())
    }

    /// m at |ξ| = `xi` (relative accuracy about 1e-9).
    pub fn symbol(&self, xi: f64) -> Result<f64> {
        let xi = xi.abs();
        if xi == 0.0 {
            return Ok(0.0);
        }
        if !xi.is_finite() {
            return Err(FracError::Parameter("symbol argument must be finite".into()));
        }
        let v = match self.dim {
            1 => self.lk_integral(xi, |x| 4.0 * (0.5 * x).sin().powi(2), 1),
            2 => self.lk_integral(xi, one_minus_j0, 2),
            n => return Err(FracError::Unsupported(format!("dimension N = {n}"))),
        };
        let v = v * if self.dim == 1 { 1.0 } else { 2.0 * PI };
        if !v.is_finite() {
            return Err(FracError::Numeric(format!("symbol quadrature failed at |xi| = {xi}")));
        }
        Ok(v)
    }

    /// ∫₀^∞ w(ξr) 𝒥(r) r^{N−1} dr with w = 4sin²(·/2) (N = 1, the factor 2
    /// of the even extension included) or 1 − J₀ (N = 2).
    fn lk_integral<W: Fn(f64) -> f64>(&self, xi: f64, w: W, dim: i32) -> f64 {
        let opts = QuadOpts::rel(1e-11).with_abs(1e-300);
        let half = PI / xi;
        let jr = |r: f64| self.profile(r) * r.powi(dim - 1);
        let f = |r: f64| if r <= 0.0 { 0.0 } else { w(xi * r) * jr(r) };
        let s = half.min(1.0);
        // Geometric panels toward the origin, then half-periods.
        let mut pts: Vec<f64> = (1..=60).rev().map(|j| s * 0.5f64.powi(j)).collect();
        pts.insert(0, 0.0);
        pts.push(s);
        let r_end = match self.cutoff {
            Some(rc) => rc,
            None => (20.0 * half).max(self.breakpoints.iter().cloned().fold(1.0, f64::max)) * 1.0001,
        };
        // Resolve at most MAX_HALF_PERIODS oscillations; beyond that the
        // remainder is handled like the infinite tail below.
        let r_a = r_end.min(s + MAX_HALF_PERIODS * half);
        let mut r = s;
        while r + half < r_a {
            r += half;
            pts.push(r);
        }
        pts.push(r_a);
        pts.extend(self.breakpoints.iter().filter(|&&b| b > s && b < r_a));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let body = integrate_pieces(f, &pts, opts).value;
        if self.cutoff.is_some() && r_a >= r_end {
            return body;
        }
        // Tail: ∫_{R}^{end} w(ξr) J r^{N−1} = c_w·mass − oscillatory part, with
        // c_w = 2 (N = 1: 4sin² = 2 − 2cos) or 1 (N = 2: 1 − J₀).
        let mut tail_pts = vec![r_a];
        tail_pts.extend(self.breakpoints.iter().filter(|&&b| b > r_a && b < r_end));
        let mass_opts = QuadOpts::rel(1e-12).with_abs(1e-300);
        let mass = match self.cutoff {
            Some(rc) => {
                tail_pts.push(rc);
                integrate_pieces(jr, &tail_pts, mass_opts).value
            }
            None => {
                let last = *tail_pts.last().unwrap();
                integrate_pieces(jr, &tail_pts, mass_opts).value + integrate_to_inf(jr, last, mass_opts).value
            }
        };
        let (cw, osc): (f64, Box<dyn Fn(f64) -> f64>) = if dim == 1 {
            (2.0, Box::new(move |x: f64| 2.0 * x.cos()))
        } else {
            (1.0, Box::new(bessel_j0))
        };
        let g = |r: f64| osc(xi * r) * jr(r);
        // Bound of the oscillatory tail for monotone profiles: 2·amplitude·J(R)/ξ.
        let bound = 4.0 * jr(r_a) / xi;
        let osc_tail = if bound < 1e-13 * body.abs() {
            0.0
        } else {
            let mut partial = Vec::with_capacity(40);
            let mut acc = 0.0;
            let mut a = r_a;
            // Each half-period nearly cancels, so tolerate relative to the body.
            let osc_opts = QuadOpts::rel(1e-11).with_abs(1e-15 * body.abs());
            for _ in 0..40 {
                acc += integrate(&g, a, a + half, osc_opts).value;
                partial.push(acc);
                a += half;
            }
            wynn_epsilon(&partial)
        };
        body + cw * mass - osc_tail
    }
}

/// Half-periods resolved by panels before switching to the tail treatment.
const MAX_HALF_PERIODS: f64 = 400.0;

/// 1 − J₀(x) without cancellation at small x.
fn one_minus_j0(x: f64) -> f64 {
    if x < 0.02 {
        let y = 0.25 * x * x;
        y * (1.0 - y / 4.0 * (1.0 - y / 9.0))
    } else {
        1.0 - bessel_j0(x)
    }
}

/// m at the vector ξ (radial: only |ξ| matters).
pub fn symbol_at(kernel: &LevyKernel, xi: &[f64]) -> Result<f64> {
    if xi.len() != kernel.dim {
        return Err(FracError::Parameter(format!("xi has {} components, kernel dimension is {}", xi.len(), kernel.dim)));
    }
    kernel.symbol(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Closed-form ∫_ℝ(1 − cos z)|z|^{−1−β}dz = π/(Γ(1+β) sin(πβ/2)).
pub fn stable_raw_symbol_1d(beta: f64) -> f64 {
    PI / (gamma(1.0 + beta) * (0.5 * PI * beta).sin())
}

/// Least-squares slope of log m against log|ξ| on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub window: (f64, f64),
    pub slope: f64,
    pub expected: f64,
    /// min and max of m/|ξ|^{expected} over the window.
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl SlopeFit {
    pub fn within(&self, tol: f64) -> bool {
        (self.slope - self.expected).abs() <= tol
    }
}

/// Slope fits on a small-|ξ| and a large-|ξ| window.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBoundsReport {
    pub kernel: String,
    pub small: SlopeFit,
    pub large: SlopeFit,
    /// Ratios bounded on both windows (finite, positive).
    pub bounded: bool,
}

/// Least-squares slope of (x, y) pairs.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn fit_window(kernel: &LevyKernel, lo: f64, hi: f64, expected: f64) -> Result<SlopeFit> {
    let k = 21;
    let xs: Vec<f64> = (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect();
    let ms = xs.iter().map(|&x| kernel.symbol(x)).collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let ratios: Vec<f64> = xs.iter().zip(&ms).map(|(x, m)| m / x.powf(expected)).collect();
    Ok(SlopeFit {
        window: (lo, hi),
        slope: ls_slope(&lx, &lm),
        expected,
        ratio_min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().cloned().fold(0.0, f64::max),
    })
}

/// Expected exponents: ϖ at small |ξ|, β at large |ξ| (0 when the kernel is
/// integrable, i.e. no singular exponent is declared).
pub fn verify_symbol_bounds(kernel: &LevyKernel, small: (f64, f64), large: (f64, f64)) -> Result<SymbolBoundsReport> {
    let lo_exp = kernel.varpi().ok_or_else(|| FracError::Parameter("kernel declares no lower tail exponent".into()))?;
    let hi_exp = kernel.beta.unwrap_or(0.0);
    let s = fit_window(kernel, small.0, small.1, lo_exp)?;
    let l = fit_window(kernel, large.0, large.1, hi_exp)?;
    let ok = |f: &SlopeFit| f.ratio_min > 0.0 && f.ratio_max.is_finite();
    Ok(SymbolBoundsReport { kernel: kernel.name.clone(), small: s, large: l, bounded: ok(&s) && ok(&l) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_constant_matches_closed_form() {
        for &b in &[0.5, 1.0, 1.5] {
            let c = stable_constant(1, b).unwrap();
            let want = 1.0 / stable_raw_symbol_1d(b);
            assert!(((c - want) / want).abs() < 1e-9, "beta={b}: {c} vs {want}");
        }
    }

    #[test]
    fn stable_symbol_is_power() {
        let k = LevyKernel::stable(1, 1.0).unwrap();
        for &x in &[0.5, 1.0, 4.0] {
            assert!(((k.symbol(x).unwrap() - x) / x).abs() < 1e-8);
        }
        assert_eq!(k.symbol(0.0).unwrap(), 0.0);
    }

    #[test]
    fn box_and_gaussian_closed_forms() {
        let b = LevyKernel::box1d();
        let g = LevyKernel::gaussian(1).unwrap();
        for &x in &[0.01f64, 0.3, 1.0, 7.0, 40.0] {
            let want = 1.0 - x.sin() / x;
            assert!(((b.symbol(x).unwrap() - want) / want).abs() < 1e-8, "box x={x}");
            let want = -(-0.5 * x * x).exp_m1();
            assert!(((g.symbol(x).unwrap() - want) / want).abs() < 1e-8, "gauss x={x}");
        }
    }

    #[test]
    fn two_dimensional_symbols() {
        let g = LevyKernel::gaussian(2).unwrap();
        for &x in &[0.1f64, 1.0, 3.0] {
            let want = -(-0.5 * x * x).exp_m1();
            assert!(((g.symbol(x).unwrap() - want) / want).abs() < 1e-7, "x={x}");
        }
        let s = LevyKernel::stable(2, 1.0).unwrap();
        for &x in &[0.3, 2.0, 10.0] {
            assert!(((s.symbol(x).unwrap() - x) / x).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn catalog_is_admissible() {
        for name in LEVY_CATALOG {
            let k = LevyKernel::from_catalog(name, 1, 1.0, Some(0.8)).unwrap();
            k.check_admissible().unwrap();
        }
        assert!(LevyKernel::from_catalog("nope", 1, 1.0, None).is_err());
        assert!(matches!(LevyKernel::stable(3, 1.0), Err(FracError::Unsupported(_))));
    }

    #[test]
    fn symbol_vector_argument() {
        let s = LevyKernel::stable(2, 1.0).unwrap();
        let v = symbol_at(&s, &[3.0, 4.0]).unwrap();
        assert!((v - 5.0).abs() < 5e-6);
        assert!(symbol_at(&s, &[1.0]).is_err());
    }
}
