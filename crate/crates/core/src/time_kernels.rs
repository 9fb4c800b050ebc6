//! Memory kernels κ of the time operator and their conjugates ℓ (κ⋆ℓ = 1).
//!
//! A [`TimeKernel`] carries κ and its primitive h_κ. The conjugate kernel is
//! obtained by product-integration deconvolution on a uniform mesh
//! ([`deconvolve_conjugate`]) and stored as one value per cell together with
//! its exact cumulative integrals. Caputo kernels additionally carry the
//! closed form ℓ(t) = t^{α-1}/Γ(α), which downstream solvers prefer.

use crate::error::{param, FracError, Result};
use crate::quad::{integrate_pieces, GaussRule, QuadOpts};
use crate::special::{gamma, rgamma};
use std::fmt;
use std::sync::Arc;

/// Shared scalar function of time.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Deconvolution residual tolerance.
pub const TOL_CONJ: f64 = 1e-10;

/// Which family a kernel belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeKernelKind {
    Caputo { alpha: f64 },
    /// κ = δ (no memory): 𝒟_t = ∂_t and ℓ ≡ 1.
    Classical,
    Custom { name: String },
}

/// Two-sided power bounds c₁t^{-α} ≤ κ(t) ≤ c₂t^{-α}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBounds {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
}

/// Memory kernel κ with its primitive h_κ(t) = ∫₀ᵗ κ.
#[derive(Clone)]
pub struct TimeKernel {
    pub kind: TimeKernelKind,
    kappa: ScalarFn,
    h_kappa: ScalarFn,
    pub alpha_bounds: Option<AlphaBounds>,
}

impl fmt::Debug for TimeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeKernel").field("kind", &self.kind).field("alpha_bounds", &self.alpha_bounds).finish()
    }
}

/// Caputo kernel κ(t) = t^{-α}/Γ(1-α).
pub fn make_caputo(alpha: f64) -> Result<TimeKernel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param(format!("Caputo order must lie in (0,1), got {alpha}"));
    }
    let g1 = gamma(1.0 - alpha);
    Ok(TimeKernel {
        kind: TimeKernelKind::Caputo { alpha },
        kappa: Arc::new(move |t| t.powf(-alpha) / g1),
        h_kappa: Arc::new(move |t| if t <= 0.0 { 0.0 } else { t.powf(1.0 - alpha) / ((1.0 - alpha) * g1) }),
        alpha_bounds: Some(AlphaBounds { c1: 1.0 / g1, c2: 1.0 / g1, alpha }),
    })
}

/// Classical kernel κ = δ: the atom is not sampled (κ(t) = 0 for t > 0)
/// but its primitive h_κ = 1 makes the deconvolution return ℓ ≡ 1 exactly.
pub fn make_classical() -> TimeKernel {
    TimeKernel {
        kind: TimeKernelKind::Classical,
        kappa: Arc::new(|_| 0.0),
        h_kappa: Arc::new(|t| if t <= 0.0 { 0.0 } else { 1.0 }),
        alpha_bounds: None,
    }
}

/// Names accepted by [`TimeKernel::from_catalog`].
pub const TIME_CATALOG: &[&str] = &["power_sum"];

impl TimeKernel {
    /// Custom kernel. Without an analytic primitive, h_κ is computed by
    /// adaptive quadrature (relative tolerance 1e-10) on geometric panels
    /// toward the origin. Admissibility is checked on a sample mesh.
    pub fn custom(name: &str, kappa: ScalarFn, h_kappa: Option<ScalarFn>, alpha_bounds: Option<AlphaBounds>) -> Result<Self> {
        let h_kappa = match h_kappa {
            Some(h) => h,
            None => {
                let k = kappa.clone();
                Arc::new(move |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let mut pts: Vec<f64> = (0..=60).rev().map(|j| t * 0.5f64.powi(j)).collect();
                    pts.insert(0, 0.0);
                    integrate_pieces(|s| k(s), &pts, QuadOpts::rel(1e-10).with_abs(1e-300)).value
                }) as ScalarFn
            }
        };
        let k = TimeKernel { kind: TimeKernelKind::Custom { name: name.to_string() }, kappa, h_kappa, alpha_bounds };
        k.validate()?;
        Ok(k)
    }

    /// Built-in custom kernels:
    /// - `power_sum`: κ(t) = (t^{-0.3} + t^{-0.7})/2 with analytic primitive.
    pub fn from_catalog(name: &str) -> Result<Self> {
        match name {
            "power_sum" => TimeKernel::custom(
                name,
                Arc::new(|t: f64| 0.5 * (t.powf(-0.3) + t.powf(-0.7))),
                Some(Arc::new(|t: f64| if t <= 0.0 { 0.0 } else { 0.5 * (t.powf(0.7) / 0.7 + t.powf(0.3) / 0.3) })),
                None,
            ),
            _ => Err(FracError::Config(format!("unknown time kernel '{name}' (known: {})", TIME_CATALOG.join(", ")))),
        }
    }

    pub fn kappa(&self, t: f64) -> f64 {
        (self.kappa)(t)
    }

    pub fn h_kappa(&self, t: f64) -> f64 {
        (self.h_kappa)(t)
    }

    /// Caputo order, if this is a Caputo kernel.
    pub fn caputo_alpha(&self) -> Option<f64> {
        match self.kind {
            TimeKernelKind::Caputo { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Sampled admissibility: κ ≥ 0 nonincreasing and vanishing at infinity,
    /// h_κ nondecreasing from 0, and the power bounds if declared.
    pub fn validate(&self) -> Result<()> {
        let ts: Vec<f64> = (0..=120).map(|j| 10f64.powf(-6.0 + 0.1 * j as f64)).collect();
        let mut prev_k = f64::INFINITY;
        let mut prev_h = 0.0;
        if self.h_kappa(0.0) != 0.0 {
            return Err(FracError::Admissibility("h_kappa(0) must be 0".into()));
        }
        for &t in &ts {
            let k = self.kappa(t);
            let h = self.h_kappa(t);
            if !(k >= 0.0) || !k.is_finite() {
                return Err(FracError::Admissibility(format!("kappa({t}) = {k} is not a finite nonnegative value")));
            }
            if k > prev_k * (1.0 + 1e-12) {
                return Err(FracError::Admissibility(format!("kappa increases near t = {t}")));
            }
            if h < prev_h * (1.0 - 1e-10) {
                return Err(FracError::Admissibility(format!("h_kappa decreases near t = {t}")));
            }
            if let Some(b) = self.alpha_bounds {
                let p = t.powf(-b.alpha);
                if k < b.c1 * p * (1.0 - 1e-12) || k > b.c2 * p * (1.0 + 1e-12) {
                    return Err(FracError::Admissibility(format!("power bounds violated at t = {t}")));
                }
            }
            prev_k = k;
            prev_h = h;
        }
        if self.kappa(1e6) > 1e-2 * self.kappa(1.0) {
            return Err(FracError::Admissibility("kappa does not decay at large t".into()));
        }
        Ok(())
    }
}

/// Conjugate kernel ℓ on the uniform mesh t_j = jΔt, j = 0..=M: one value
/// per cell (t_j, t_{j+1}] plus exact cumulative integrals at the nodes.
#[derive(Debug, Clone)]
pub struct ConjugateKernel {
    pub dt: f64,
    /// ℓ on cell j (length M).
    pub ell: Vec<f64>,
    /// h_ℓ(t_j) (length M+1).
    pub h_ell: Vec<f64>,
    /// g_ℓ(t_j) = ∫₀^{t_j} h_ℓ (length M+1).
    pub g_ell: Vec<f64>,
    /// Caputo order when the closed form ℓ = t^{α-1}/Γ(α) is attached.
    pub closed_alpha: Option<f64>,
    /// max_j |(κ⋆ℓ)(t_j) − 1| of the construction (0 for injected tables).
    pub residual: f64,
}

impl ConjugateKernel {
    /// Table from cell values; checks ℓ ≥ 0 and nonincreasing.
    pub fn from_cells(dt: f64, ell: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || ell.is_empty() {
            return Err(FracError::Mesh(format!("need dt > 0 and at least one cell (dt = {dt})")));
        }
        check_monotone(&ell)?;
        let m = ell.len();
        let mut h = vec![0.0; m + 1];
        let mut g = vec![0.0; m + 1];
        for j in 0..m {
            h[j + 1] = h[j] + ell[j] * dt;
            g[j + 1] = g[j] + h[j] * dt + 0.5 * ell[j] * dt * dt;
        }
        Ok(ConjugateKernel { dt, ell, h_ell: h, g_ell: g, closed_alpha: None, residual: 0.0 })
    }

    /// ℓ ≡ 1: the conjugate of the classical time derivative.
    pub fn classical(dt: f64, m: usize) -> Result<Self> {
        ConjugateKernel::from_cells(dt, vec![1.0; m])
    }

    /// Caputo closed form tabulated by exact cell averages.
    pub fn caputo_closed(alpha: f64, dt: f64, m: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return param(format!("Caputo order must lie in (0,1), got {alpha}"));
        }
        let hl = |t: f64| caputo_h_ell(alpha, t);
        let ell = (0..m).map(|j| (hl((j + 1) as f64 * dt) - hl(j as f64 * dt)) / dt).collect();
        let mut c = ConjugateKernel::from_cells(dt, ell)?;
        c.closed_alpha = Some(alpha);
        for j in 0..=m {
            c.h_ell[j] = hl(j as f64 * dt);
            c.g_ell[j] = caputo_g_ell(alpha, j as f64 * dt);
        }
        Ok(c)
    }

    /// Number of cells M.
    pub fn cells(&self) -> usize {
        self.ell.len()
    }

    /// Right end of the tabulated range, MΔt.
    pub fn t_max(&self) -> f64 {
        self.dt * self.cells() as f64
    }

    fn cell_of(&self, t: f64) -> usize {
        (((t / self.dt).ceil() as usize).max(1) - 1).min(self.cells() - 1)
    }

    /// ℓ(t) (closed form if attached, else the cell value).
    pub fn ell_at(&self, t: f64) -> f64 {
        match self.closed_alpha {
            Some(a) => t.powf(a - 1.0) * rgamma(a),
            None => self.ell[self.cell_of(t)],
        }
    }

    /// h_ℓ(t) = ∫₀ᵗ ℓ; exact for the cellwise representation and for the
    /// closed form. Unbounded for closed forms, range-checked for tables.
    pub fn h_ell_at(&self, t: f64) -> Result<f64> {
        if let Some(a) = self.closed_alpha {
            if !(t >= 0.0) {
                return Err(FracError::Range(format!("h_ell needs t >= 0, got {t}")));
            }
            return Ok(caputo_h_ell(a, t));
        }
        self.check_range(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let j = self.cell_of(t);
        Ok(self.h_ell[j] + self.ell[j] * (t - j as f64 * self.dt))
    }

    /// g_ℓ(t) = ∫₀ᵗ h_ℓ.
    pub fn g_ell_at(&self, t: f64) -> Result<f64> {
        if let Some(a) = self.closed_alpha {
            return Ok(caputo_g_ell(a, t.max(0.0)));
        }
        self.check_range(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let j = self.cell_of(t);
        let s = t - j as f64 * self.dt;
        Ok(self.g_ell[j] + self.h_ell[j] * s + 0.5 * self.ell[j] * s * s)
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || t > self.t_max() * (1.0 + 1e-12) {
            return Err(FracError::Range(format!("t = {t} outside tabulated range [0, {}]", self.t_max())));
        }
        Ok(())
    }

    /// Lag moments over u ∈ [u1, u0]: (∫ℓ(u)du, ∫ℓ(u)(u0−u)du).
    ///
    /// Closed form: exact power differences near the origin, 8-point
    /// Gauss–Legendre once the interval is well separated from it (the
    /// differences cancel catastrophically there). Tables: exact integration
    /// of the piecewise-constant representation.
    pub fn lag_moments(&self, u1: f64, u0: f64) -> (f64, f64) {
        let h = u0 - u1;
        if let Some(a) = self.closed_alpha {
            if u1 > 4.0 * h {
                let rule = gl8();
                let mut i0 = 0.0;
                let mut i1 = 0.0;
                let c = rgamma(a);
                for (u, w) in rule.mapped(u1, u0) {
                    let l = u.powf(a - 1.0) * c;
                    i0 += w * l;
                    i1 += w * l * (u0 - u);
                }
                return (i0, i1);
            }
            let hl = |t| caputo_h_ell(a, t);
            let gl = |t| caputo_g_ell(a, t);
            return (hl(u0) - hl(u1), gl(u0) - gl(u1) - h * hl(u1));
        }
        let mut i0 = 0.0;
        let mut i1 = 0.0;
        let mut p = u1;
        while p < u0 {
            let j = ((p / self.dt + 1e-9).floor() as usize).min(self.cells() - 1);
            let q = (((j + 1) as f64) * self.dt).min(u0);
            let q = if q <= p { u0 } else { q };
            let l = self.ell[j];
            i0 += l * (q - p);
            i1 += 0.5 * l * ((u0 - p).powi(2) - (u0 - q).powi(2));
            p = q;
        }
        (i0, i1)
    }
}

fn gl8() -> &'static GaussRule {
    static RULE: std::sync::OnceLock<GaussRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(8))
}

/// t^α/Γ(α+1).
pub fn caputo_h_ell(alpha: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t.powf(alpha) * rgamma(alpha + 1.0)
    }
}

/// t^{α+1}/Γ(α+2).
pub fn caputo_g_ell(alpha: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t.powf(alpha + 1.0) * rgamma(alpha + 2.0)
    }
}

fn check_monotone(ell: &[f64]) -> Result<()> {
    for (j, w) in ell.windows(2).enumerate() {
        if w[1] > w[0] * (1.0 + 1e-8) + 1e-300 {
            return Err(FracError::Admissibility(format!(
                "conjugate kernel increases between cells {j} and {}: {} -> {}",
                j + 1,
                w[0],
                w[1]
            )));
        }
    }
    if let Some(j) = ell.iter().position(|&v| !(v >= 0.0)) {
        return Err(FracError::Admissibility(format!("conjugate kernel negative on cell {j}")));
    }
    Ok(())
}

/// Solve the product-integration system Σ_{i≤n} ℓ_i w_{n-i} = 1 with
/// w_j = h_κ((j+1)Δt) − h_κ(jΔt), for M cells. κ(0) is never evaluated.
pub fn deconvolve_conjugate(kernel: &TimeKernel, dt: f64, m: usize) -> Result<ConjugateKernel> {
    if !(dt > 0.0) || m == 0 {
        return Err(FracError::Mesh(format!("need dt > 0 and M >= 1 (dt = {dt}, M = {m})")));
    }
    let hk: Vec<f64> = (0..=m).map(|j| kernel.h_kappa(j as f64 * dt)).collect();
    if !(hk[1] > 0.0) || !hk[1].is_finite() {
        return Err(FracError::Mesh(format!("h_kappa(dt) = {} makes the system singular", hk[1])));
    }
    let w: Vec<f64> = hk.windows(2).map(|p| p[1] - p[0]).collect();
    let mut ell = vec![0.0; m];
    for n in 0..m {
        let s: f64 = (0..n).map(|i| ell[i] * w[n - i]).sum();
        ell[n] = (1.0 - s) / w[0];
    }
    let residual = (0..m)
        .map(|n| ((0..=n).map(|i| ell[i] * w[n - i]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut c = ConjugateKernel::from_cells(dt, ell)?;
    c.residual = residual;
    if residual > TOL_CONJ {
        return Err(FracError::Numeric(format!("deconvolution residual {residual:.3e} exceeds {TOL_CONJ:.0e}")));
    }
    if let Some(a) = kernel.caputo_alpha() {
        c.closed_alpha = Some(a);
    }
    Ok(c)
}

/// h_ℓ(t) of a conjugate kernel (free-function form).
pub fn h_ell_at(conj: &ConjugateKernel, t: f64) -> Result<f64> {
    conj.h_ell_at(t)
}

/// Node-wise check of ℓ ≤ 1/h_κ and h_ℓ·h_κ ≥ t using the tabulated values
/// (ℓ at t_j is the value of the cell ending at t_j, the conservative choice).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub nodes: usize,
    pub ell_bound_violations: usize,
    pub product_violations: usize,
    /// max_j ℓ(t_j)·h_κ(t_j) (≤ 1 required).
    pub worst_ell_ratio: f64,
    /// min_j h_ℓ(t_j)h_κ(t_j)/t_j (≥ 1 required).
    pub worst_product_ratio: f64,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.ell_bound_violations == 0 && self.product_violations == 0
    }
}

pub fn check_conjugate_inequalities(conj: &ConjugateKernel, kernel: &TimeKernel) -> InequalityReport {
    let mut r = InequalityReport {
        nodes: conj.cells(),
        ell_bound_violations: 0,
        product_violations: 0,
        worst_ell_ratio: 0.0,
        worst_product_ratio: f64::INFINITY,
    };
    for j in 1..=conj.cells() {
        let t = j as f64 * conj.dt;
        let hk = kernel.h_kappa(t);
        let ratio = conj.ell[j - 1] * hk;
        let prod = conj.h_ell[j] * hk / t;
        r.worst_ell_ratio = r.worst_ell_ratio.max(ratio);
        r.worst_product_ratio = r.worst_product_ratio.min(prod);
        if ratio > 1.0 + 1e-12 {
            r.ell_bound_violations += 1;
        }
        if prod < 1.0 - 1e-12 {
            r.product_violations += 1;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn caputo_values() {
        let k = make_caputo(0.5).unwrap();
        assert!((k.kappa(1.0) - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((k.h_kappa(4.0) - 4.0 / PI.sqrt()).abs() < 1e-14);
        assert!(make_caputo(1.0).is_err());
        assert!(make_caputo(0.0).is_err());
    }

    #[test]
    fn closed_h_ell() {
        let c = ConjugateKernel::caputo_closed(0.5, 0.01, 200).unwrap();
        assert!((c.h_ell_at(1.0).unwrap() - 1.0 / gamma(1.5)).abs() < 1e-14);
        assert_eq!(c.h_ell_at(0.0).unwrap(), 0.0);
    }

    #[test]
    fn table_range_error() {
        let c = ConjugateKernel::classical(0.1, 10).unwrap();
        assert!((c.h_ell_at(0.55).unwrap() - 0.55).abs() < 1e-15);
        assert!((c.g_ell_at(0.55).unwrap() - 0.55 * 0.55 / 2.0).abs() < 1e-15);
        assert!(matches!(c.h_ell_at(1.5), Err(FracError::Range(_))));
    }

    #[test]
    fn deconvolution_residual_and_inequalities_power_sum() {
        let k = TimeKernel::from_catalog("power_sum").unwrap();
        let c = deconvolve_conjugate(&k, 1.0 / 256.0, 1024).unwrap();
        assert!(c.residual <= TOL_CONJ);
        let r = check_conjugate_inequalities(&c, &k);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn quadrature_primitive_matches_analytic() {
        let k = TimeKernel::custom("q", Arc::new(|t: f64| t.powf(-0.4)), None, None).unwrap();
        let want = 2.0f64.powf(0.6) / 0.6;
        assert!(((k.h_kappa(2.0) - want) / want).abs() < 1e-9);
    }

    #[test]
    fn rejects_increasing_kernel() {
        let r = TimeKernel::custom("bad", Arc::new(|t: f64| t), Some(Arc::new(|t: f64| t * t / 2.0)), None);
        assert!(matches!(r, Err(FracError::Admissibility(_))));
    }

    #[test]
    fn lag_moments_closed_vs_table() {
        let c = ConjugateKernel::caputo_closed(0.3, 0.01, 1000).unwrap();
        let (i0, i1) = c.lag_moments(5.0, 5.01);
        let mut t = c.clone();
        t.closed_alpha = None;
        let (j0, j1) = t.lag_moments(5.0, 5.01);
        assert!(((i0 - j0) / i0).abs() < 1e-6);
        assert!(((i1 - 0.5 * 0.01 * i0) / i1).abs() < 1e-3);
        assert!(((j1 - 0.5 * 0.01 * j0) / j1).abs() < 1e-12);
    }
}
