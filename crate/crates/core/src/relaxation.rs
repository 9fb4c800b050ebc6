//! Relaxation functions ρ₁(t; μ), ρ₂(t; μ):
//!   ρ₁ + μ(ℓ⋆ρ₁) = 1,   ρ₂ + μ(ℓ⋆ρ₂) = ℓ.
//!
//! General kernels: product-trapezoid convolution quadrature (piecewise
//! linear unknown, exact ℓ moments per cell). For closed-form Caputo ℓ the
//! first few steps sit on an algebraically graded sub-mesh that resolves the
//! t^α layer at the origin; beyond it the mesh is uniform and the weights are
//! Toeplitz. ρ₂ is handled through its primitive R = 1⋆ρ₂, which solves the
//! same equation with right-hand side h_ℓ, and is reported as cell averages.
//!
//! Caputo closed forms: ρ₁ = E_α(−μt^α), ρ₂ = t^{α−1}E_{α,α}(−μt^α),
//! R = t^α E_{α,α+1}(−μt^α), R₂ = ∫R = t^{α+1}E_{α,α+2}(−μt^α).

use crate::error::{FracError, Result};
use crate::special::{mittag_leffler, rgamma};
use crate::time_kernels::{ConjugateKernel, TimeKernel};

/// Uniform steps covered by the graded start.
const GRADED_STEPS: usize = 64;
/// Graded nodes on [0, GRADED_STEPS·Δt].
const GRADED_NODES: usize = 800;

/// Relaxation functions for one μ on the uniform mesh t_j = jΔt, j = 0..=M.
#[derive(Debug, Clone)]
pub struct RelaxationTable {
    pub mu: f64,
    pub dt: f64,
    /// ρ₁(t_j), length M+1.
    pub rho1: Vec<f64>,
    /// Cell averages of ρ₂ on (t_{j−1}, t_j], stored at index j−1 (length M).
    pub rho2: Vec<f64>,
    /// R(t_j) = ∫₀^{t_j} ρ₂, length M+1.
    pub r: Vec<f64>,
    /// R₂(t_j) = ∫₀^{t_j} R, length M+1.
    pub r2: Vec<f64>,
}

impl RelaxationTable {
    pub fn cells(&self) -> usize {
        self.rho2.len()
    }

    fn from_primitives(mu: f64, dt: f64, rho1: Vec<f64>, r: Vec<f64>, r2: Vec<f64>) -> Self {
        let rho2 = r.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        RelaxationTable { mu, dt, rho1, rho2, r, r2 }
    }
}

/// μ-independent product-trapezoid weights for one conjugate kernel.
#[derive(Debug, Clone)]
pub struct VolterraWeights {
    /// Composite mesh (graded start, then uniform).
    pub nodes: Vec<f64>,
    pub dt: f64,
    /// Cells with index ≥ `p` are uniform.
    p: usize,
    /// Toeplitz weights (older, newer) by lag d = 1.. (index 0 unused).
    uni: Vec<(f64, f64)>,
    /// Weights of target n on graded cells c < min(n, p).
    graded: Vec<Vec<(f64, f64)>>,
    /// Composite index of each uniform node t_j.
    pub uniform_index: Vec<usize>,
}

impl VolterraWeights {
    /// Weights on [0, MΔt] where M and Δt are those of the conjugate table.
    pub fn new(conj: &ConjugateKernel) -> Result<Self> {
        let dt = conj.dt;
        let m = conj.cells();
        let (nodes, p) = match conj.closed_alpha {
            Some(a) => graded_mesh(dt, m, a),
            None => ((0..=m).map(|j| j as f64 * dt).collect(), 0),
        };
        let g_end = if p == 0 { 0 } else { (nodes[p] / dt).round() as usize };
        let mut uniform_index = Vec::with_capacity(m + 1);
        for j in 0..=m {
            if j <= g_end {
                let t = j as f64 * dt;
                let k = nodes[..=p].iter().position(|&s| (s - t).abs() <= 1e-12 * dt.max(t)).ok_or_else(|| {
                    FracError::Mesh(format!("uniform node {t} missing from graded start"))
                })?;
                uniform_index.push(k);
            } else {
                uniform_index.push(p + (j - g_end));
            }
        }
        let moments = |t: f64, a0: f64, a1: f64| -> (f64, f64) {
            let (i0, i1) = conj.lag_moments(t - a1, t - a0);
            let cr = i1 / (a1 - a0);
            (i0 - cr, cr)
        };
        let n_tot = nodes.len();
        let uni: Vec<(f64, f64)> = (0..n_tot.saturating_sub(p)).map(|d| if d == 0 { (0.0, 0.0) } else { moments(d as f64 * dt, 0.0, dt) }).collect();
        let graded: Vec<Vec<(f64, f64)>> = (0..n_tot)
            .map(|n| (0..n.min(p)).map(|c| moments(nodes[n], nodes[c], nodes[c + 1])).collect())
            .collect();
        Ok(VolterraWeights { nodes, dt, p, uni, graded, uniform_index })
    }

    /// Solve y + μ(ℓ⋆y) = f for several right-hand sides sampled on the
    /// composite mesh; returns one solution per right-hand side.
    pub fn solve<const K: usize>(&self, mu: f64, f: [&[f64]; K]) -> [Vec<f64>; K] {
        let n_tot = self.nodes.len();
        let mut y: [Vec<f64>; K] = std::array::from_fn(|k| {
            let mut v = vec![0.0; n_tot];
            v[0] = f[k][0];
            v
        });
        for n in 1..n_tot {
            let mut acc = [0.0; K];
            let diag;
            let gw = &self.graded[n];
            let last_graded = n.min(self.p);
            for (c, &(wl, wr)) in gw.iter().enumerate() {
                for k in 0..K {
                    acc[k] += wl * y[k][c];
                    if c + 1 < n {
                        acc[k] += wr * y[k][c + 1];
                    }
                }
            }
            if n <= self.p {
                diag = gw[n - 1].1;
            } else {
                for c in last_graded..n {
                    let (wl, wr) = self.uni[n - c];
                    for k in 0..K {
                        acc[k] += wl * y[k][c];
                        if c + 1 < n {
                            acc[k] += wr * y[k][c + 1];
                        }
                    }
                }
                diag = self.uni[1].1;
            }
            for k in 0..K {
                y[k][n] = (f[k][n] - mu * acc[k]) / (1.0 + mu * diag);
            }
        }
        y
    }
}

/// Graded mesh GΔt(k/K)^{2/α} united with t_1..t_G, then uniform to MΔt.
/// Returns the nodes and the index of the node GΔt.
fn graded_mesh(dt: f64, m: usize, alpha: f64) -> (Vec<f64>, usize) {
    let g = GRADED_STEPS.min(m);
    let r = 2.0 / alpha;
    let end = g as f64 * dt;
    // Graded nodes too close to a uniform node are dropped in its favour.
    let mut nodes: Vec<f64> = (0..=GRADED_NODES)
        .map(|k| end * (k as f64 / GRADED_NODES as f64).powf(r))
        .filter(|&t| {
            let j = (t / dt).round();
            j < 1.0 || (t - j * dt).abs() > 1e-6 * dt
        })
        .collect();
    nodes.extend((1..=g).map(|j| j as f64 * dt));
    nodes.sort_by(f64::total_cmp);
    let p = nodes.len() - 1;
    nodes.extend((g + 1..=m).map(|j| j as f64 * dt));
    (nodes, p)
}

/// Shared-weight solver producing full tables for many μ.
#[derive(Debug, Clone)]
pub struct VolterraSolver {
    pub weights: VolterraWeights,
    hl: Vec<f64>,
    gl: Vec<f64>,
}

impl VolterraSolver {
    pub fn new(conj: &ConjugateKernel) -> Result<Self> {
        let weights = VolterraWeights::new(conj)?;
        let hl = weights.nodes.iter().map(|&t| conj.h_ell_at(t.min(conj.t_max()))).collect::<Result<Vec<_>>>()?;
        let gl = weights.nodes.iter().map(|&t| conj.g_ell_at(t.min(conj.t_max()))).collect::<Result<Vec<_>>>()?;
        Ok(VolterraSolver { weights, hl, gl })
    }

    /// ρ₁, R, R₂ for one μ ≥ 0 on the uniform nodes.
    pub fn table(&self, mu: f64) -> Result<RelaxationTable> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(FracError::Parameter(format!("mu must be finite and >= 0, got {mu}")));
        }
        let ones = vec![1.0; self.weights.nodes.len()];
        let [rho1, r, r2] = self.weights.solve(mu, [&ones, &self.hl, &self.gl]);
        let pick = |v: &[f64]| self.weights.uniform_index.iter().map(|&k| v[k]).collect::<Vec<_>>();
        Ok(RelaxationTable::from_primitives(mu, self.weights.dt, pick(&rho1), pick(&r), pick(&r2)))
    }
}

/// Full Volterra table (ρ₁ and cell-averaged ρ₂) with the nonnegativity
/// check of ρ₂.
pub fn relax_volterra(conj: &ConjugateKernel, mu: f64) -> Result<RelaxationTable> {
    let t = VolterraSolver::new(conj)?.table(mu)?;
    check_rho2_nonnegative(&t, conj)?;
    Ok(t)
}

/// ρ₁(t_j; μ) on the uniform nodes.
pub fn rho1_volterra(conj: &ConjugateKernel, mu: f64) -> Result<Vec<f64>> {
    Ok(VolterraSolver::new(conj)?.table(mu)?.rho1)
}

/// Cell averages of ρ₂(·; μ); negative averages beyond tolerance are a
/// discretization failure.
pub fn rho2_volterra(conj: &ConjugateKernel, mu: f64) -> Result<Vec<f64>> {
    Ok(relax_volterra(conj, mu)?.rho2)
}

/// Relative tolerance for negative ρ₂ cell averages.
pub const RHO2_NEG_TOL: f64 = 1e-8;

fn check_rho2_nonnegative(t: &RelaxationTable, conj: &ConjugateKernel) -> Result<()> {
    for (j, &v) in t.rho2.iter().enumerate() {
        let lbar = (conj.h_ell[j + 1] - conj.h_ell[j]) / conj.dt;
        if v < -RHO2_NEG_TOL * lbar {
            return Err(FracError::Discretization(format!(
                "rho2 cell average {v:.3e} < 0 on cell {j} (mu = {}); refine the mesh",
                t.mu
            )));
        }
    }
    Ok(())
}

/// Fixed-point iterates R_{k+1} = h_ℓ − μ ℓ⋆R_k of the integrated ρ₂
/// equation (R = 1⋆ρ₂), using the same product weights; an optional
/// cross-check of the direct solve.
pub struct Rho2Recursion<'a> {
    solver: &'a VolterraSolver,
    mu: f64,
    current: Vec<f64>,
}

impl<'a> Rho2Recursion<'a> {
    pub fn new(solver: &'a VolterraSolver, mu: f64) -> Self {
        Rho2Recursion { solver, mu, current: solver.hl.clone() }
    }
}

impl Iterator for Rho2Recursion<'_> {
    /// R_k on the uniform nodes.
    type Item = Vec<f64>;
    fn next(&mut self) -> Option<Vec<f64>> {
        let w = &self.solver.weights;
        // ℓ⋆R_k at every node: the explicit product sum including the diagonal.
        let n_tot = w.nodes.len();
        let mut conv = vec![0.0; n_tot];
        for (n, cv) in conv.iter_mut().enumerate().skip(1) {
            let mut acc = 0.0;
            for (c, &(wl, wr)) in w.graded[n].iter().enumerate() {
                acc += wl * self.current[c] + wr * self.current[c + 1];
            }
            for c in n.min(w.p)..n {
                let (wl, wr) = w.uni[n - c];
                acc += wl * self.current[c] + wr * self.current[c + 1];
            }
            *cv = acc;
        }
        self.current = self.solver.hl.iter().zip(&conv).map(|(h, c)| h - self.mu * c).collect();
        Some(w.uniform_index.iter().map(|&k| self.current[k]).collect())
    }
}

/// Closed-form Caputo table from direct Mittag-Leffler evaluation.
pub fn rho_caputo_closed(kernel: &TimeKernel, mu: f64, dt: f64, m: usize) -> Result<RelaxationTable> {
    let alpha = kernel
        .caputo_alpha()
        .ok_or_else(|| FracError::Kind("closed-form relaxation requires a Caputo kernel".into()))?;
    if !(mu >= 0.0) || !(dt > 0.0) || m == 0 {
        return Err(FracError::Parameter(format!("need mu >= 0, dt > 0, M >= 1 (mu = {mu}, dt = {dt}, M = {m})")));
    }
    let mut rho1 = Vec::with_capacity(m + 1);
    let mut r = Vec::with_capacity(m + 1);
    let mut r2 = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let t = j as f64 * dt;
        let x = -mu * t.powf(alpha);
        rho1.push(mittag_leffler(alpha, 1.0, x)?);
        r.push(if t == 0.0 { 0.0 } else { t.powf(alpha) * mittag_leffler(alpha, alpha + 1.0, x)? });
        r2.push(if t == 0.0 { 0.0 } else { t.powf(alpha + 1.0) * mittag_leffler(alpha, alpha + 2.0, x)? });
    }
    Ok(RelaxationTable::from_primitives(mu, dt, rho1, r, r2))
}

/// Pointwise closed-form ρ₂(t; μ) = t^{α−1}E_{α,α}(−μt^α).
pub fn rho2_caputo_point(alpha: f64, mu: f64, t: f64) -> Result<f64> {
    Ok(t.powf(alpha - 1.0) * mittag_leffler(alpha, alpha, -mu * t.powf(alpha))?)
}

/// Interpolated Caputo relaxation profile.
///
/// The four functions E_{α,b}(−x), b ∈ {α, 1, α+1, α+2}, are tabulated on a
/// uniform grid in ln x and evaluated by 6-point Lagrange interpolation;
/// outside the table direct evaluation is cheap (short series or asymptotic
/// expansion). Relative accuracy is about 1e-11.
#[derive(Debug, Clone)]
pub struct CaputoProfile {
    pub alpha: f64,
    v0: f64,
    h: f64,
    tables: [Vec<f64>; 4],
}

const PROFILE_LNX_MIN: f64 = -14.0;
const PROFILE_LNX_MAX: f64 = 12.0;
const PROFILE_PER_UNIT: usize = 64;

impl CaputoProfile {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(FracError::Parameter(format!("Caputo order must lie in (0,1), got {alpha}")));
        }
        let h = 1.0 / PROFILE_PER_UNIT as f64;
        let n = ((PROFILE_LNX_MAX - PROFILE_LNX_MIN) / h).round() as usize + 1;
        let bs = Self::orders(alpha);
        let mut tables: [Vec<f64>; 4] = Default::default();
        for (k, tab) in tables.iter_mut().enumerate() {
            *tab = (0..n)
                .map(|i| mittag_leffler(alpha, bs[k], -(PROFILE_LNX_MIN + i as f64 * h).exp()))
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(CaputoProfile { alpha, v0: PROFILE_LNX_MIN, h, tables })
    }

    fn orders(alpha: f64) -> [f64; 4] {
        [alpha, 1.0, alpha + 1.0, alpha + 2.0]
    }

    /// E_{α,b_k}(−x) for k indexing b ∈ {α, 1, α+1, α+2}.
    pub fn e(&self, k: usize, x: f64) -> f64 {
        let b = Self::orders(self.alpha)[k];
        if x <= 0.0 {
            return rgamma(b);
        }
        let v = x.ln();
        let tab = &self.tables[k];
        let u = (v - self.v0) / self.h;
        if u < 2.0 || u > (tab.len() - 4) as f64 {
            return mittag_leffler(self.alpha, b, -x).unwrap_or(f64::NAN);
        }
        let i0 = (u.floor() as usize - 2).min(tab.len() - 6);
        let s = u - i0 as f64;
        let mut sum = 0.0;
        for k in 0..6 {
            let mut w = 1.0;
            for j in 0..6 {
                if j != k {
                    w *= (s - j as f64) / (k as f64 - j as f64);
                }
            }
            sum += w * tab[i0 + k];
        }
        sum
    }

    /// ρ₁(t; μ).
    pub fn rho1(&self, mu: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        self.e(1, mu * t.powf(self.alpha))
    }

    /// ρ₂(t; μ) (pointwise, singular at t = 0).
    pub fn rho2(&self, mu: f64, t: f64) -> f64 {
        t.powf(self.alpha - 1.0) * self.e(0, mu * t.powf(self.alpha))
    }

    /// R(t; μ) = ∫₀ᵗ ρ₂.
    pub fn r(&self, mu: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(self.alpha) * self.e(2, mu * t.powf(self.alpha))
    }

    /// R₂(t; μ) = ∫₀ᵗ R.
    pub fn r2(&self, mu: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(self.alpha + 1.0) * self.e(3, mu * t.powf(self.alpha))
    }

    /// Average of ρ₂ over [a, b]: primitive difference when it is well
    /// conditioned, otherwise 6-point Gauss–Legendre of the pointwise value
    /// (cells away from the origin).
    pub fn rho2_average(&self, mu: f64, a: f64, b: f64) -> f64 {
        let (ra, rb) = (self.r(mu, a), self.r(mu, b));
        if a <= 0.0 || rb - ra > 1e-3 * rb.abs() {
            return (rb - ra) / (b - a);
        }
        let rule = gl6();
        rule.mapped(a, b).map(|(t, w)| w * self.rho2(mu, t)).sum::<f64>() / (b - a)
    }

    /// Product weights of ∫_a^b ρ₂(u)·(linear hat) du for the lag interval
    /// [a, b]: (weight of the end at lag b, weight of the end at lag a),
    /// i.e. (∫ρ₂(u)(u−a)/h, ∫ρ₂(u)(b−u)/h). Primitive differences near the
    /// origin, Gauss–Legendre (6 or, far out, 3 points) elsewhere.
    pub fn lag_weights(&self, mu: f64, a: f64, b: f64) -> (f64, f64) {
        let h = b - a;
        if a < 4.0 * h {
            let (ra, rb) = (self.r(mu, a), self.r(mu, b));
            let d2 = self.r2(mu, b) - self.r2(mu, a);
            return (rb - d2 / h, d2 / h - ra);
        }
        let rule = if a >= 16.0 * h { gl3() } else { gl6() };
        let mut wl = 0.0;
        let mut wr = 0.0;
        for (u, w) in rule.mapped(a, b) {
            let v = w * self.rho2(mu, u);
            wl += v * (u - a) / h;
            wr += v * (b - u) / h;
        }
        (wl, wr)
    }
}

fn gl3() -> &'static crate::quad::GaussRule {
    static RULE: std::sync::OnceLock<crate::quad::GaussRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| crate::quad::GaussRule::new(3))
}

fn gl6() -> &'static crate::quad::GaussRule {
    static RULE: std::sync::OnceLock<crate::quad::GaussRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| crate::quad::GaussRule::new(6))
}

/// Invariant report of one relaxation table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelaxationReport {
    /// ρ₁ outside (0, 1].
    pub rho1_range_violations: usize,
    /// ρ₁ increasing between nodes.
    pub rho1_monotone_violations: usize,
    /// ρ₁ > 1/(1 + μh_ℓ).
    pub rho1_bound_violations: usize,
    /// ρ₂ cell average below −tol·ℓ̄.
    pub rho2_negative: usize,
    /// ρ̄₂ > ℓ̄·ρ₁(t_{j−1}) beyond tolerance away from the origin.
    pub rho2_bound_violations: usize,
    /// Same, within the first graded steps (flagged, not failed).
    pub rho2_bound_flags: usize,
    /// max_j |μR(t_j) − (1 − ρ₁(t_j))|: the integrated identity.
    pub consistency: f64,
}

impl RelaxationReport {
    pub fn passed(&self) -> bool {
        self.rho1_range_violations == 0
            && self.rho1_monotone_violations == 0
            && self.rho1_bound_violations == 0
            && self.rho2_negative == 0
            && self.rho2_bound_violations == 0
    }
}

/// Check the table invariants against the conjugate kernel on the same mesh.
pub fn check_table(t: &RelaxationTable, conj: &ConjugateKernel) -> RelaxationReport {
    let mut rep = RelaxationReport::default();
    let m = t.cells().min(conj.cells());
    for j in 0..=m {
        let p = t.rho1[j];
        if !(p > 0.0 && p <= 1.0 + 1e-14) {
            rep.rho1_range_violations += 1;
        }
        if j > 0 && p > t.rho1[j - 1] + 1e-14 {
            rep.rho1_monotone_violations += 1;
        }
        let bound = 1.0 / (1.0 + t.mu * conj.h_ell[j]);
        if p > bound + 1e-12 {
            rep.rho1_bound_violations += 1;
        }
        rep.consistency = rep.consistency.max((t.mu * t.r[j] - (1.0 - p)).abs());
    }
    for j in 0..m {
        let lbar = (conj.h_ell[j + 1] - conj.h_ell[j]) / conj.dt;
        let v = t.rho2[j];
        if v < -RHO2_NEG_TOL * lbar {
            rep.rho2_negative += 1;
        }
        let cap = lbar * t.rho1[j];
        if v > cap * (1.0 + RHO2_NEG_TOL) {
            if j < GRADED_STEPS && v <= cap * (1.0 + 10.0 * RHO2_NEG_TOL) {
                rep.rho2_bound_flags += 1;
            } else {
                rep.rho2_bound_violations += 1;
            }
        }
    }
    rep
}
