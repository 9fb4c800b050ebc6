//! The fundamental pair (Z_t, Y_t) in spectral form: Ẑ_t(ξ) = ρ₁(t; m(ξ)),
//! Ŷ_t(ξ) = ρ₂(t; m(ξ)), tabulated per distinct lattice radius, with the
//! decay, subordination and smoothing checks.

use crate::error::{FracError, Result};
use crate::heat::{characteristic_frequency, heat_multiplier, log_times, nyquist_radius, DecayFit, DecayGrid, DecayReport, ResolvedField};
use crate::levy::LevyKernel;
use crate::quad::{integrate, GaussRule, QuadOpts};
use crate::relaxation::{CaputoProfile, RelaxationTable, VolterraSolver};
use crate::spectral::{convolve, lattice_norm, symbol_grid, Lattice, SpatialField, SymbolGrid, Transform};
use crate::special::gamma::gamma;
use crate::special::wright::{phi_moment, Mainardi};
use crate::time_kernels::{caputo_h_ell, deconvolve_conjugate, ConjugateKernel, TimeKernel, TimeKernelKind};
use rayon::prelude::*;
use std::sync::Arc;

/// How relaxation values are produced for one pair.
#[derive(Debug, Clone)]
pub enum RelaxSource {
    /// Caputo kernel: interpolated Mittag-Leffler profile (any t).
    Caputo(Arc<CaputoProfile>),
    /// Classical kernel (ℓ ≡ 1): ρ₁ = ρ₂ = e^{−μt} exactly.
    Exponential,
    /// General kernel: one Volterra table per distinct radius (mesh nodes only).
    Volterra { conj: Arc<ConjugateKernel>, tables: Vec<RelaxationTable> },
}

/// Uniform time mesh t_n = nΔt, n = 0..=M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub dt: f64,
    pub cells: usize,
}

impl Mesh {
    pub fn new(dt: f64, cells: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || cells == 0 {
            return Err(FracError::Mesh(format!("need dt > 0 and at least one cell (dt = {dt}, M = {cells})")));
        }
        Ok(Mesh { dt, cells })
    }

    pub fn node(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.node(self.cells)
    }
}

/// Spectral tables of Z and Y on a symbol grid and a uniform mesh.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub grid: SymbolGrid,
    pub mesh: Mesh,
    /// ρ₁(t_n; m_r), row n has one entry per distinct radius (M+1 rows).
    pub zhat: Vec<Vec<f64>>,
    /// Average of ρ₂(·; m_r) over (t_n, t_{n+1}] (M rows).
    pub yhat_cell: Vec<Vec<f64>>,
    /// h_ℓ at the nodes.
    pub h_ell: Vec<f64>,
    pub kernel_time: TimeKernel,
    pub kernel_space: LevyKernel,
    pub source: RelaxSource,
}

/// Tabulate the pair. Caputo kernels use the closed form through the
/// interpolated profile; other kernels solve one Volterra problem per
/// distinct radius.
pub fn build_pair(kernel_time: &TimeKernel, kernel_space: &LevyKernel, grid: &SymbolGrid, mesh: Mesh) -> Result<PairTable> {
    let rr = grid.radii();
    let (zhat, yhat_cell, h_ell, source) = if let Some(alpha) = kernel_time.caputo_alpha() {
        let prof = Arc::new(CaputoProfile::new(alpha)?);
        let zhat: Vec<Vec<f64>> = (0..=mesh.cells)
            .into_par_iter()
            .map(|n| grid.values.iter().map(|&m| prof.rho1(m, mesh.node(n))).collect())
            .collect();
        let yhat: Vec<Vec<f64>> = (0..mesh.cells)
            .into_par_iter()
            .map(|n| grid.values.iter().map(|&m| prof.rho2_average(m, mesh.node(n), mesh.node(n + 1))).collect())
            .collect();
        let h: Vec<f64> = (0..=mesh.cells).map(|n| caputo_h_ell(alpha, mesh.node(n))).collect();
        (zhat, yhat, h, RelaxSource::Caputo(prof))
    } else if kernel_time.kind == TimeKernelKind::Classical {
        let zhat: Vec<Vec<f64>> = (0..=mesh.cells).map(|n| grid.values.iter().map(|&m| (-m * mesh.node(n)).exp()).collect()).collect();
        let yhat: Vec<Vec<f64>> = (0..mesh.cells)
            .map(|n| grid.values.iter().map(|&m| (-m * mesh.node(n)).exp() * phi1(m * mesh.dt)).collect())
            .collect();
        let h: Vec<f64> = (0..=mesh.cells).map(|n| mesh.node(n)).collect();
        (zhat, yhat, h, RelaxSource::Exponential)
    } else {
        let conj = Arc::new(deconvolve_conjugate(kernel_time, mesh.dt, mesh.cells)?);
        let solver = VolterraSolver::new(&conj)?;
        let tables = grid.values.par_iter().map(|&m| solver.table(m)).collect::<Result<Vec<_>>>()?;
        let zhat = (0..=mesh.cells).map(|n| tables.iter().map(|t| t.rho1[n]).collect()).collect();
        let yhat = (0..mesh.cells).map(|n| tables.iter().map(|t| t.rho2[n]).collect()).collect();
        let h = conj.h_ell.clone();
        (zhat, yhat, h, RelaxSource::Volterra { conj, tables })
    };
    debug_assert!(zhat.iter().all(|row: &Vec<f64>| row.len() == rr));
    Ok(PairTable {
        grid: grid.clone(),
        mesh,
        zhat,
        yhat_cell,
        h_ell,
        kernel_time: kernel_time.clone(),
        kernel_space: kernel_space.clone(),
        source,
    })
}

impl PairTable {
    fn check_node(&self, n: usize) -> Result<()> {
        if n > self.mesh.cells {
            return Err(FracError::Range(format!("node {n} outside mesh of {} cells", self.mesh.cells)));
        }
        Ok(())
    }

    /// Z at node n.
    pub fn z_field(&self, n: usize) -> Result<ResolvedField> {
        self.check_node(n)?;
        let tr = Transform::new(self.grid.lattice);
        let row = &self.zhat[n];
        let values = tr.inverse_radial(&self.grid, row);
        Ok(ResolvedField { field: SpatialField::new(self.grid.lattice, values, self.mesh.node(n))?, tail: row[nyquist_radius(&self.grid)] / row[0] })
    }

    /// Cell average of Y over (t_n, t_{n+1}].
    pub fn y_cell_field(&self, n: usize) -> Result<ResolvedField> {
        if n >= self.mesh.cells {
            return Err(FracError::Range(format!("cell {n} outside mesh of {} cells", self.mesh.cells)));
        }
        let tr = Transform::new(self.grid.lattice);
        let row = &self.yhat_cell[n];
        let values = tr.inverse_radial(&self.grid, row);
        Ok(ResolvedField { field: SpatialField::new(self.grid.lattice, values, self.mesh.node(n + 1))?, tail: row[nyquist_radius(&self.grid)] / row[0] })
    }

    /// Product weights of ∫ Y_{t−τ}(ξ_r) f(τ)dτ over one lag interval [a, b]
    /// with f linear in τ: (weight of f at lag b, weight of f at lag a).
    /// Volterra pairs require a, b on the mesh.
    pub fn lag_weights(&self, r: usize, a: f64, b: f64) -> Result<(f64, f64)> {
        match &self.source {
            RelaxSource::Caputo(p) => Ok(p.lag_weights(self.grid.values[r], a, b)),
            RelaxSource::Exponential => {
                let m = self.grid.values[r];
                let h = b - a;
                let e = (-m * a).exp() * h;
                let w2 = e * phi2(m * h);
                Ok((w2, e * phi1(m * h) - w2))
            }
            RelaxSource::Volterra { tables, .. } => {
                let ia = (a / self.mesh.dt).round();
                let ib = (b / self.mesh.dt).round();
                let on_mesh = |i: f64, t: f64| (i * self.mesh.dt - t).abs() <= 1e-9 * self.mesh.dt;
                if !on_mesh(ia, a) || !on_mesh(ib, b) || ib as usize > self.mesh.cells || ib <= ia {
                    return Err(FracError::Mesh(format!("lag interval [{a}, {b}] not on the tabulated mesh")));
                }
                let (ia, ib) = (ia as usize, ib as usize);
                let t = &tables[r];
                let h = b - a;
                let wr = (t.r2[ib] - t.r2[ia]) / h - t.r[ia];
                Ok((t.r[ib] - t.r[ia] - wr, wr))
            }
        }
    }

    /// ρ₁(t; m_r) for t on the mesh (any t for Caputo pairs).
    pub fn rho1(&self, r: usize, t: f64) -> Result<f64> {
        match &self.source {
            RelaxSource::Caputo(p) => Ok(p.rho1(self.grid.values[r], t)),
            RelaxSource::Exponential => Ok((-self.grid.values[r] * t).exp()),
            RelaxSource::Volterra { tables, .. } => {
                let i = (t / self.mesh.dt).round();
                if (i * self.mesh.dt - t).abs() > 1e-9 * self.mesh.dt || i as usize > self.mesh.cells {
                    return Err(FracError::Mesh(format!("t = {t} not on the tabulated mesh")));
                }
                Ok(tables[r].rho1[i as usize])
            }
        }
    }

    /// Whether relaxation values exist off the mesh (adaptive steps).
    pub fn supports_refinement(&self) -> bool {
        matches!(self.source, RelaxSource::Caputo(_) | RelaxSource::Exponential)
    }

    /// Invariant violations: zero-mode identities and 0 ≤ Ẑ ≤ 1/(1 + m h_ℓ).
    pub fn check_invariants(&self) -> PairInvariants {
        let zero = self.grid.values.iter().position(|&m| m == 0.0).unwrap_or(0);
        let mut inv = PairInvariants::default();
        for (n, row) in self.zhat.iter().enumerate() {
            inv.zero_mode_z = inv.zero_mode_z.max((row[zero] - 1.0).abs());
            for (&z, &m) in row.iter().zip(&self.grid.values) {
                let bound = 1.0 / (1.0 + m * self.h_ell[n]);
                if !(z >= -1e-12 && z <= 1.0 + 1e-12) {
                    inv.range_violations += 1;
                }
                if z > bound * (1.0 + 1e-9) + 1e-14 {
                    inv.bound_violations += 1;
                }
            }
        }
        for (n, row) in self.yhat_cell.iter().enumerate() {
            let ell_avg = (self.h_ell[n + 1] - self.h_ell[n]) / self.mesh.dt;
            inv.zero_mode_y = inv.zero_mode_y.max(((row[zero] - ell_avg) / ell_avg).abs());
        }
        inv
    }
}

/// Worst deviations of the pair's structural identities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairInvariants {
    /// max |Ẑ(0) − 1|.
    pub zero_mode_z: f64,
    /// max relative deviation of Ŷ_cell(0) from the cell average of ℓ.
    pub zero_mode_y: f64,
    pub range_violations: usize,
    pub bound_violations: usize,
}

impl PairInvariants {
    pub fn passed(&self) -> bool {
        self.zero_mode_z <= 1e-12 && self.zero_mode_y <= 1e-9 && self.range_violations == 0 && self.bound_violations == 0
    }
}

/// (1 − e^{−z})/z = ∫₀¹e^{−zs}ds.
fn phi1(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// ∫₀¹ s e^{−zs}ds = (1 − (1+z)e^{−z})/z², by series for small z.
fn phi2(z: f64) -> f64 {
    if z < 0.1 {
        let mut term = 1.0;
        let mut sum = 0.5;
        for k in 1..20 {
            term *= -z / k as f64;
            sum += term / (k + 2) as f64;
        }
        sum
    } else {
        (-(-z).exp_m1() - z * (-z).exp()) / (z * z)
    }
}

/// Caputo order of a time kernel, or an unsupported-configuration error.
fn require_caputo(kernel: &TimeKernel, what: &str) -> Result<f64> {
    kernel.caputo_alpha().ok_or_else(|| FracError::Unsupported(format!("{what} is implemented for Caputo kernels only")))
}

/// Lattice scaled to the length of Z_t: half-width `spread`/ξ* with
/// m(ξ*)h_ℓ(t) = 1.
pub fn pair_lattice(kernel: &LevyKernel, alpha: f64, t: f64, grid: DecayGrid) -> Result<Lattice> {
    let xs = characteristic_frequency(|x| kernel.symbol(x), caputo_h_ell(alpha, t))?;
    Lattice::new(kernel.dim, grid.spread / xs, grid.n)
}

/// Relative width of the cell (t(1−w), t] used for Y in decay fits.
pub const Y_CELL_FRACTION: f64 = 1.0 / 64.0;

/// ‖Z_t‖_q and ‖Y_t(cell)‖_q on per-time scaled lattices (Caputo).
pub fn pair_norms(prof: &CaputoProfile, kernel: &LevyKernel, times: &[f64], qs: &[f64], grid: DecayGrid) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut z = vec![Vec::new(); qs.len()];
    let mut y = vec![Vec::new(); qs.len()];
    for &t in times {
        let lat = pair_lattice(kernel, prof.alpha, t, grid)?;
        let sg = symbol_grid(kernel, lat)?;
        let tr = Transform::new(lat);
        let zr: Vec<f64> = sg.values.iter().map(|&m| prof.rho1(m, t)).collect();
        let yr: Vec<f64> = sg.values.iter().map(|&m| prof.rho2_average(m, t * (1.0 - Y_CELL_FRACTION), t)).collect();
        let zf = tr.inverse_radial(&sg, &zr);
        let yf = tr.inverse_radial(&sg, &yr);
        let dv = lat.cell_volume();
        for (i, &q) in qs.iter().enumerate() {
            z[i].push(lattice_norm(&zf, dv, q));
            y[i].push(lattice_norm(&yf, dv, q));
        }
    }
    Ok((z, y))
}

/// Predicted log-log slopes of ‖Z_t‖_q (h_ℓ ~ t^α).
pub fn z_decay_exponents(alpha: f64, dim: usize, beta: f64, varpi: f64, q: f64) -> (f64, f64) {
    let s = 1.0 - 1.0 / q;
    let n = dim as f64;
    (-alpha * n / beta * s, -alpha * (n / varpi * s).min(1.0))
}

/// Predicted log-log slopes of ‖Y_t‖_q.
pub fn y_decay_exponents(alpha: f64, dim: usize, beta: f64, varpi: f64, q: f64) -> (f64, f64) {
    let s = 1.0 - 1.0 / q;
    let n = dim as f64;
    (alpha - 1.0 - alpha * n / beta * s, alpha - 1.0 - alpha * (n / varpi * s).min(2.0))
}

/// Slope fits of ‖Z_t‖_q and ‖Y_t(cell)‖_q below and above t = 1.
pub fn verify_pair_decay(kernel_time: &TimeKernel, kernel_space: &LevyKernel, small: (f64, f64), large: (f64, f64), qs: &[f64], grid: DecayGrid) -> Result<DecayReport> {
    let alpha = require_caputo(kernel_time, "decay fitting on scaled lattices")?;
    let beta = kernel_space.beta.ok_or_else(|| FracError::Parameter("pair decay needs a declared β".into()))?;
    let varpi = kernel_space.varpi().ok_or_else(|| FracError::Parameter("pair decay needs a declared ω".into()))?;
    let prof = CaputoProfile::new(alpha)?;
    let mut fits = Vec::new();
    for (regime, (lo, hi)) in [(0, small), (1, large)] {
        let times = log_times(lo, hi, grid.per_decade);
        let (zn, yn) = pair_norms(&prof, kernel_space, &times, qs, grid)?;
        for (i, &q) in qs.iter().enumerate() {
            let ze = z_decay_exponents(alpha, kernel_space.dim, beta, varpi, q);
            let ye = y_decay_exponents(alpha, kernel_space.dim, beta, varpi, q);
            let (zl, yl) = if regime == 0 { ("Z small t", "Y small t") } else { ("Z large t", "Y large t") };
            fits.push(DecayFit::from_samples(zl, q, times.clone(), zn[i].clone(), if regime == 0 { ze.0 } else { ze.1 }));
            fits.push(DecayFit::from_samples(yl, q, times.clone(), yn[i].clone(), if regime == 0 { ye.0 } else { ye.1 }));
        }
    }
    Ok(DecayReport::assemble(fits))
}

/// Z_t in self-similar variables on lattices L_t = L₁t^{α/β}: the values
/// t^{αN/β}Z_t(x_j t^{α/β}) for t ∈ `times`, and the largest L¹ discrepancy
/// (measured in the rescaled variable) against the first time.
pub fn self_similar_collapse(alpha: f64, kernel: &LevyKernel, base: Lattice, times: &[f64]) -> Result<f64> {
    let beta = kernel.beta.ok_or_else(|| FracError::Parameter("collapse needs a declared β".into()))?;
    let prof = CaputoProfile::new(alpha)?;
    let n = kernel.dim as f64;
    let mut profiles = Vec::new();
    for &t in times {
        let s = t.powf(alpha / beta);
        let lat = Lattice::new(base.dim, base.half_width * s, base.n)?;
        let sg = symbol_grid(kernel, lat)?;
        let zr: Vec<f64> = sg.values.iter().map(|&m| prof.rho1(m, t)).collect();
        let z = Transform::new(lat).inverse_radial(&sg, &zr);
        let scale = t.powf(alpha * n / beta);
        profiles.push(z.iter().map(|v| v * scale).collect::<Vec<f64>>());
    }
    let dv = base.cell_volume();
    let mut worst: f64 = 0.0;
    for p in &profiles[1..] {
        let d: Vec<f64> = p.iter().zip(&profiles[0]).map(|(a, b)| a - b).collect();
        worst = worst.max(lattice_norm(&d, dv, 1.0));
    }
    Ok(worst)
}

/// θ-quadrature for ∫₀^{z_cut} g(θ)φ(θ)dθ: Gauss–Legendre panels, geometric
/// toward θ = 0 (where e^{−mτθ} varies fastest for large m), uniform beyond 1.
#[derive(Debug, Clone)]
pub struct ThetaRule {
    pub nodes: Vec<f64>,
    /// Weights already multiplied by φ(θ).
    pub weights: Vec<f64>,
    pub mainardi: Mainardi,
}

impl ThetaRule {
    pub fn new(alpha: f64) -> Result<Self> {
        let mainardi = Mainardi::new(alpha)?;
        let gl = GaussRule::new(16);
        let mut edges: Vec<f64> = (0..=48).rev().map(|j| 0.5f64.powi(j)).collect();
        edges.insert(0, 0.0);
        let mut z = 1.0;
        while z < mainardi.z_cut {
            z = (z + 0.25).min(mainardi.z_cut);
            edges.push(z);
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            for (x, wt) in gl.mapped(w[0], w[1]) {
                nodes.push(x);
                weights.push(wt * mainardi.phi(x));
            }
        }
        Ok(ThetaRule { nodes, weights, mainardi })
    }
}

/// Discrepancies of the Caputo subordination identities at node n.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinationReport {
    pub t: f64,
    /// ‖Z_t − ∫G_{t^αθ}φ(θ)dθ‖₁.
    pub z_l1: f64,
    pub z_linf: f64,
    /// ‖Y_t − t^{α−1}∫G_{t^αθ}αθφ(θ)dθ‖₁ (pointwise ρ₂ on the spectral side).
    pub y_l1: f64,
    pub y_linf: f64,
    /// ∫φ and ∫αθφ from adaptive quadrature.
    pub phi_mass: f64,
    pub phi_alpha_moment: f64,
    /// Mass dropped by truncating φ at z_cut (recorded bound).
    pub truncation_bound: f64,
}

/// Compare the spectral pair at node n against the θ-mixture of heat
/// kernels G_{t^αθ} on the same lattice.
pub fn subordination_check(pair: &PairTable, n: usize) -> Result<SubordinationReport> {
    let alpha = require_caputo(&pair.kernel_time, "subordination")?;
    pair.check_node(n)?;
    let t = pair.mesh.node(n);
    if t <= 0.0 {
        return Err(FracError::Range("subordination check needs t > 0".into()));
    }
    let rule = ThetaRule::new(alpha)?;
    let prof = match &pair.source {
        RelaxSource::Caputo(p) => p.clone(),
        _ => Arc::new(CaputoProfile::new(alpha)?),
    };
    let grid = &pair.grid;
    let tau = t.powf(alpha);
    let mut zsub = vec![0.0; grid.radii()];
    let mut ysub = vec![0.0; grid.radii()];
    for (&th, &w) in rule.nodes.iter().zip(&rule.weights) {
        let g = heat_multiplier(grid, tau * th);
        for r in 0..grid.radii() {
            zsub[r] += w * g[r];
            ysub[r] += w * alpha * th * g[r];
        }
    }
    let yscale = t.powf(alpha - 1.0);
    ysub.iter_mut().for_each(|v| *v *= yscale);
    let yspec: Vec<f64> = grid.values.iter().map(|&m| prof.rho2(m, t)).collect();
    let tr = Transform::new(grid.lattice);
    let dv = grid.lattice.cell_volume();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        tr.inverse_radial(grid, &d)
    };
    let dz = diff(&pair.zhat[n], &zsub);
    let dy = diff(&yspec, &ysub);
    let m = &rule.mainardi;
    Ok(SubordinationReport {
        t,
        z_l1: lattice_norm(&dz, dv, 1.0),
        z_linf: lattice_norm(&dz, dv, f64::INFINITY),
        y_l1: lattice_norm(&dy, dv, 1.0),
        y_linf: lattice_norm(&dy, dv, f64::INFINITY),
        phi_mass: phi_moment(m, 0),
        phi_alpha_moment: alpha * phi_moment(m, 1),
        truncation_bound: m.truncation_error,
    })
}

/// Expected ∫αθφ(θ)dθ = α/Γ(1+α).
pub fn expected_alpha_moment(alpha: f64) -> f64 {
    alpha / gamma(1.0 + alpha)
}

/// (ℓ⋆ρ₁)(t; μ) for the Caputo ℓ by adaptive quadrature with the endpoint
/// singularities removed: s = w^{1/α} on [0, t/2] (ρ₁ ~ 1 − ct^α) and
/// t − s = w^{1/α} on [t/2, t] (ℓ ~ (t−s)^{α−1}).
pub fn ell_conv_rho1(prof: &CaputoProfile, mu: f64, t: f64) -> f64 {
    let a = prof.alpha;
    let c = 1.0 / gamma(a);
    let opts = QuadOpts::rel(1e-13).with_abs(1e-300);
    let half = 0.5 * t;
    let wmax = half.powf(a);
    // Left: s = w^{1/α}, ds = w^{1/α−1}/α dw.
    let left = integrate(
        |w: f64| {
            let s = w.powf(1.0 / a);
            c * (t - s).powf(a - 1.0) * prof.rho1(mu, s) * s / (a * w.max(1e-300))
        },
        0.0,
        wmax,
        opts,
    )
    .value;
    // Right: t − s = w^{1/α}; ℓ(w^{1/α})·ds = c·w^{(α−1)/α}·w^{1/α−1}/α dw = c/α dw.
    let right = integrate(|w: f64| c / a * prof.rho1(mu, t - w.powf(1.0 / a)), 0.0, wmax, opts).value;
    left + right
}

/// Relation Y = ∂_t(ℓ⋆Z) per frequency: max relative error of the cell
/// differences of ℓ⋆ρ₁ against the tabulated ρ₂ cell averages, over the
/// sampled radii and cells.
pub fn y_relation_check(pair: &PairTable, radii: &[usize], cells: &[usize]) -> Result<f64> {
    let alpha = require_caputo(&pair.kernel_time, "the Y = ∂(ℓ⋆Z) check")?;
    let prof = CaputoProfile::new(alpha)?;
    let dt = pair.mesh.dt;
    let errs: Vec<f64> = radii
        .par_iter()
        .flat_map_iter(|&r| {
            let mu = pair.grid.values[r];
            let prof = &prof;
            cells.iter().map(move |&n| {
                let a = ell_conv_rho1(prof, mu, pair.mesh.node(n));
                let b = ell_conv_rho1(prof, mu, pair.mesh.node(n + 1));
                let d = (b - a) / dt;
                let y = pair.yhat_cell[n][r];
                ((d - y) / y).abs()
            })
        })
        .collect();
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Worst ratios ‖Z_t∗g‖_q/‖g‖_q and ‖Y_cell∗g‖_q/(ℓ̄‖g‖_q) over sampled g,
/// nodes and q ∈ {1, 2, ∞} (≤ 1 expected).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    pub worst_z_ratio: f64,
    pub worst_y_ratio: f64,
}

pub fn smoothing_check(pair: &PairTable, samples: &[Vec<f64>], nodes: &[usize]) -> Result<SmoothingReport> {
    let tr = Transform::new(pair.grid.lattice);
    let dv = pair.grid.lattice.cell_volume();
    let mut wz: f64 = 0.0;
    let mut wy: f64 = 0.0;
    for &n in nodes {
        let z = pair.z_field(n)?.field.values;
        let cell = n.saturating_sub(1).min(pair.mesh.cells - 1);
        let y = pair.y_cell_field(cell)?.field.values;
        let ell_avg = (pair.h_ell[cell + 1] - pair.h_ell[cell]) / pair.mesh.dt;
        for g in samples {
            let zg = convolve(&tr, &z, g);
            let yg = convolve(&tr, &y, g);
            for q in [1.0, 2.0, f64::INFINITY] {
                let gn = lattice_norm(g, dv, q);
                wz = wz.max(lattice_norm(&zg, dv, q) / gn);
                wy = wy.max(lattice_norm(&yg, dv, q) / (ell_avg * gn));
            }
        }
    }
    Ok(SmoothingReport { worst_z_ratio: wz, worst_y_ratio: wy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::heat_kernel_field;
    use crate::time_kernels::{make_caputo, make_classical};

    fn caputo_pair(alpha: f64, l: f64, n: usize, dt: f64, m: usize) -> PairTable {
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let sg = symbol_grid(&ks, Lattice::new(1, l, n).unwrap()).unwrap();
        build_pair(&make_caputo(alpha).unwrap(), &ks, &sg, Mesh::new(dt, m).unwrap()).unwrap()
    }

    #[test]
    fn invariants_and_mass() {
        let p = caputo_pair(0.5, 32.0, 512, 0.05, 40);
        let inv = p.check_invariants();
        assert!(inv.passed(), "{inv:?}");
        let z = p.z_field(20).unwrap().field;
        assert!((z.mass() - 1.0).abs() < 1e-12);
        let y = p.y_cell_field(3).unwrap().field;
        let want = (caputo_h_ell(0.5, 0.2) - caputo_h_ell(0.5, 0.15)) / 0.05;
        assert!(((y.mass() - want) / want).abs() < 1e-10);
    }

    #[test]
    fn unit_conjugate_gives_heat_kernel() {
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let sg = symbol_grid(&ks, Lattice::new(1, 32.0, 256).unwrap()).unwrap();
        let kt = make_classical();
        let conj = deconvolve_conjugate(&kt, 0.01, 100).unwrap();
        assert!(conj.ell.iter().all(|&l| l == 1.0));
        let p = build_pair(&kt, &ks, &sg, Mesh::new(0.01, 100).unwrap()).unwrap();
        let z = p.z_field(100).unwrap().field.values;
        let g = heat_kernel_field(&sg, 1.0).unwrap().field.values;
        let d: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b).collect();
        assert!(lattice_norm(&d, sg.lattice.cell_volume(), 1.0) < 1e-13);
        assert!(p.check_invariants().passed());
    }

    #[test]
    fn volterra_with_unit_conjugate_is_second_order() {
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let sg = symbol_grid(&ks, Lattice::new(1, 32.0, 64).unwrap()).unwrap();
        let err = |dt: f64| {
            let m = (1.0 / dt).round() as usize;
            let solver = VolterraSolver::new(&ConjugateKernel::classical(dt, m).unwrap()).unwrap();
            sg.values.iter().map(|&mu| (solver.table(mu).unwrap().rho1[m] - (-mu).exp()).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 < 1e-2 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn exponential_lag_weights_match_quadrature() {
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let sg = symbol_grid(&ks, Lattice::new(1, 4.0, 16).unwrap()).unwrap();
        let p = build_pair(&make_classical(), &ks, &sg, Mesh::new(0.1, 10).unwrap()).unwrap();
        for r in 0..sg.radii() {
            let m = sg.values[r];
            let (a, b) = (0.3, 0.4);
            let (wl, wr) = p.lag_weights(r, a, b).unwrap();
            let gl = GaussRule::new(12);
            let el = gl.integrate(|u| (-m * u).exp() * (u - a) / 0.1, a, b);
            let er = gl.integrate(|u| (-m * u).exp() * (b - u) / 0.1, a, b);
            assert!((wl - el).abs() < 1e-14 && (wr - er).abs() < 1e-14);
        }
    }

    #[test]
    fn theta_moments() {
        for &a in &[0.3, 0.5, 0.8] {
            let m = Mainardi::new(a).unwrap();
            assert!((phi_moment(&m, 0) - 1.0).abs() < 1e-8);
            assert!((a * phi_moment(&m, 1) - expected_alpha_moment(a)).abs() < 1e-8);
        }
    }

    #[test]
    fn subordination_agrees() {
        let p = caputo_pair(0.5, 64.0, 2048, 0.25, 8);
        let r = subordination_check(&p, 4).unwrap();
        assert!(r.z_l1 < 1e-6 && r.y_l1 < 1e-6, "{r:?}");
    }

    #[test]
    fn y_is_time_derivative_of_ell_conv_z() {
        let p = caputo_pair(0.5, 16.0, 64, 0.01, 200);
        let e = y_relation_check(&p, &[1, 5, 20, 32], &[0, 1, 10, 100, 199]).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn smoothing_norms() {
        let p = caputo_pair(0.5, 16.0, 256, 0.05, 20);
        let lat = p.grid.lattice;
        let g1 = lat.radial_field(|r| (-r * r).exp());
        let g2 = lat.radial_field(|r| if r < 2.0 { 1.0 } else { 0.0 });
        let rep = smoothing_check(&p, &[g1, g2], &[1, 5, 20]).unwrap();
        assert!(rep.worst_z_ratio <= 1.0 + 1e-9 && rep.worst_y_ratio <= 1.0 + 1e-9, "{rep:?}");
    }

    #[test]
    fn non_caputo_subordination_is_unsupported() {
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let sg = symbol_grid(&ks, Lattice::new(1, 8.0, 32).unwrap()).unwrap();
        let kt = TimeKernel::from_catalog("power_sum").unwrap();
        let p = build_pair(&kt, &ks, &sg, Mesh::new(0.05, 10).unwrap()).unwrap();
        assert!(matches!(subordination_check(&p, 5), Err(FracError::Unsupported(_))));
        assert!(p.check_invariants().passed(), "{:?}", p.check_invariants());
    }
}
