//! Blow-up and global-existence machinery: the Fujita exponent, the
//! power-tail test functions and the A^{−γ} scaling of ℒφ, the Kaplan-type
//! mass certificate with its empirical calibration, the θ-weighted norm and
//! the smoothing exponents δ, δ′.

use crate::error::{FracError, Result};
use crate::levy::LevyKernel;
use crate::pair::{build_pair, Mesh, PairTable};
use crate::solver::{Propagator, SolutionState, StepPolicy};
use crate::spectral::{lattice_norm, symbol_grid, Lattice, SpatialField, SymbolGrid, Transform};
use crate::time_kernels::make_caputo;

/// p_* = 1 + γ̄/N with γ̄ = min{γ, 2}.
pub fn fujita_exponent(dim: usize, gamma: f64) -> Result<f64> {
    if dim == 0 || !(gamma > 0.0) {
        return Err(FracError::Parameter(format!("need N ≥ 1 and γ > 0 (N = {dim}, γ = {gamma})")));
    }
    Ok(1.0 + gamma.min(2.0) / dim as f64)
}

/// δ(r, q; t): N/β(1/r − 1/q) for t ≤ 1, min{1, N/ϖ(1/r − 1/q)} for t > 1.
/// The corresponding decay of Z_t∗g is h_ℓ(t)^{−δ}.
pub fn delta(r: f64, q: f64, t: f64, dim: usize, beta: f64, varpi: f64) -> f64 {
    let d = 1.0 / r - 1.0 / q;
    let n = dim as f64;
    if t <= 1.0 {
        n / beta * d
    } else {
        (n / varpi * d).min(1.0)
    }
}

/// δ′(r, q; t): as δ with the large-time cap 2 (used for Y_t∗g).
pub fn delta_prime(r: f64, q: f64, t: f64, dim: usize, beta: f64, varpi: f64) -> f64 {
    let d = 1.0 / r - 1.0 / q;
    let n = dim as f64;
    if t <= 1.0 {
        n / beta * d
    } else {
        (n / varpi * d).min(2.0)
    }
}

/// Radial test function φ(x) = ψ(|x|/A): ψ = 1 on [0, 1], |z|^{−N−γ} on
/// [2, ∞), joined by the quintic matching value, slope and curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub dim: usize,
    pub scale: f64,
    pub gamma: f64,
    coef: [f64; 3],
}

impl TestFunction {
    pub fn new(dim: usize, scale: f64, gamma: f64) -> Result<Self> {
        if !(scale > 2.0) || !(gamma > 0.0) || dim == 0 {
            return Err(FracError::Parameter(format!("test function needs A > 2, γ > 0 (A = {scale}, γ = {gamma})")));
        }
        let k = dim as f64 + gamma;
        let v = 2f64.powf(-k);
        let (a, b, c) = (v - 1.0, -k * v / 2.0, k * (k + 1.0) * v / 4.0);
        let coef = [10.0 * a - 4.0 * b + 0.5 * c, -15.0 * a + 7.0 * b - c, 6.0 * a - 3.0 * b + 0.5 * c];
        Ok(TestFunction { dim, scale, gamma, coef })
    }

    /// ψ(z) at |z| = z.
    pub fn psi(&self, z: f64) -> f64 {
        let k = self.dim as f64 + self.gamma;
        if z <= 1.0 {
            1.0
        } else if z >= 2.0 {
            z.powf(-k)
        } else {
            let s = z - 1.0;
            1.0 + s * s * s * (self.coef[0] + s * (self.coef[1] + s * self.coef[2]))
        }
    }

    /// ψ″(z) (radial second derivative).
    pub fn psi_second(&self, z: f64) -> f64 {
        let k = self.dim as f64 + self.gamma;
        if z <= 1.0 {
            0.0
        } else if z >= 2.0 {
            k * (k + 1.0) * z.powf(-k - 2.0)
        } else {
            let s = z - 1.0;
            s * (6.0 * self.coef[0] + s * (12.0 * self.coef[1] + s * 20.0 * self.coef[2]))
        }
    }

    /// φ(x) at |x| = r.
    pub fn value(&self, r: f64) -> f64 {
        self.psi(r / self.scale)
    }

    /// φ sampled on a lattice.
    pub fn field(&self, lat: Lattice) -> Vec<f64> {
        (0..lat.len()).map(|i| self.value(lat.radius(i))).collect()
    }
}

/// ℒφ through the symbol: transform, multiply by m, invert.
pub fn apply_operator(grid: &SymbolGrid, phi: &[f64]) -> Vec<f64> {
    let tr = Transform::new(grid.lattice);
    let hat = tr.forward(phi);
    let m: Vec<_> = hat.iter().enumerate().map(|(i, v)| v * grid.values[grid.index[i] as usize]).collect();
    tr.inverse(&m)
}

/// Scaling check of |ℒφ| ≤ cA^{−γ}φ for one A.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSample {
    pub scale: f64,
    /// sup |ℒφ|/(A^{−γ}φ) (power test) or sup (ℒφ)₊/(A^{−2}φ) (Gaussian test).
    pub ratio: f64,
    /// min of ℒφ on |x| < A/2 relative to max|ℒφ| (should be ≥ −tolerance).
    pub interior_min: f64,
}

/// R(A) over the scales with the exponent used.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFnReport {
    pub gamma_eff: f64,
    /// true when the Gaussian route (γ̄ = 2) was used.
    pub gaussian: bool,
    pub samples: Vec<ScalingSample>,
}

impl TestFnReport {
    pub fn spread(&self) -> f64 {
        let hi = self.samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
        let lo = self.samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// Interior positivity up to the relative ringing floor 10⁻⁶.
    pub fn interior_nonnegative(&self) -> bool {
        self.gaussian || self.samples.iter().all(|s| s.interior_min >= -1e-6)
    }

    pub fn passed(&self) -> bool {
        self.spread() <= 2.0 && self.samples.iter().all(|s| s.ratio.is_finite() && s.ratio > 0.0) && self.interior_nonnegative()
    }
}

/// R(A) = sup|ℒφ_A|/(A^{−γ}φ_A) for A in `scales` on a lattice of n points
/// per axis and half-width L = 8·max A; the outer 10% is excluded. Kernels
/// with γ̄ = 2 use γ_eff = 1.99 and the Gaussian test e^{−|x|²/A²}, whose
/// one-sided ratio (ℒφ)₊/(A^{−2}φ) is checked instead.
pub fn verify_testfn_bound(kernel: &LevyKernel, scales: &[f64], n: usize) -> Result<TestFnReport> {
    let gamma_bar = kernel.gamma_bar().ok_or_else(|| FracError::Parameter("test-function check needs a declared γ".into()))?;
    if scales.is_empty() || scales.iter().any(|&a| !(a > 2.0)) {
        return Err(FracError::Config("scales must be > 2".into()));
    }
    let amax = scales.iter().cloned().fold(0.0, f64::max);
    let lat = Lattice::new(kernel.dim, 8.0 * amax, n)?;
    if lat.dx() > 0.25 * scales.iter().cloned().fold(f64::INFINITY, f64::min) {
        return Err(FracError::Config(format!("grid spacing {} too coarse for A = {}", lat.dx(), scales[0])));
    }
    let grid = symbol_grid(kernel, lat)?;
    let gaussian = gamma_bar >= 2.0;
    let gamma_eff = if gaussian { 1.99 } else { gamma_bar };
    let mut samples = Vec::new();
    for &a in scales {
        let (phi, norm) = if gaussian {
            ((0..lat.len()).map(|i| (-(lat.radius(i) / a).powi(2)).exp()).collect::<Vec<_>>(), a.powi(-2))
        } else {
            (TestFunction::new(kernel.dim, a, gamma_eff)?.field(lat), a.powf(-gamma_eff))
        };
        let lphi = apply_operator(&grid, &phi);
        let peak = lphi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut ratio: f64 = 0.0;
        let mut interior = f64::INFINITY;
        for i in 0..lat.len() {
            let r = lat.radius(i);
            if r > 0.9 * lat.half_width {
                continue;
            }
            if gaussian {
                // Relative size of the Gaussian is meaningful only where it
                // dominates the spectral floor.
                if phi[i] > 1e-8 {
                    ratio = ratio.max(lphi[i].max(0.0) / (norm * phi[i]));
                }
            } else {
                ratio = ratio.max(lphi[i].abs() / (norm * phi[i]));
            }
            if r < 0.5 * a {
                interior = interior.min(lphi[i] / peak);
            }
        }
        samples.push(ScalingSample { scale: a, ratio, interior_min: interior });
    }
    Ok(TestFnReport { gamma_eff, gaussian, samples })
}

/// Verdict of the mass certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KaplanVerdict {
    CertifiedBlowupBeforeT0,
    Inconclusive,
}

/// Exponent α(N/γ̄ − 1/(p−1)) of the mass threshold.
pub fn kaplan_exponent(dim: usize, alpha: f64, gamma_bar: f64, p: f64) -> f64 {
    alpha * (dim as f64 / gamma_bar - 1.0 / (p - 1.0))
}

/// ∫_{|x| < T₀^{α/γ̄}} u₀ on the lattice.
pub fn ball_mass(u0: &SpatialField, t0: f64, alpha: f64, gamma_bar: f64) -> f64 {
    let radius = t0.powf(alpha / gamma_bar);
    let lat = u0.lattice;
    (0..lat.len()).filter(|&i| lat.radius(i) < radius).map(|i| u0.values[i]).sum::<f64>() * lat.cell_volume()
}

/// Certificate: ball mass > 2·c_cal·T₀^{α(N/γ̄ − 1/(p−1))}.
pub fn kaplan_certificate(u0: &SpatialField, t0: f64, alpha: f64, gamma_bar: f64, p: f64, c_cal: f64) -> KaplanVerdict {
    let threshold = c_cal * t0.powf(kaplan_exponent(u0.lattice.dim, alpha, gamma_bar, p));
    if ball_mass(u0, t0, alpha, gamma_bar) > 2.0 * threshold {
        KaplanVerdict::CertifiedBlowupBeforeT0
    } else {
        KaplanVerdict::Inconclusive
    }
}

/// One training configuration of the calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaplanTraining {
    pub alpha: f64,
    pub p: f64,
    /// Width of the Gaussian bump exp(−|x|²/w²).
    pub width: f64,
}

/// Solver resolution used by the calibration runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaplanGrid {
    pub half_width: f64,
    pub n: usize,
    pub cells: usize,
}

/// Calibration outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanCalibration {
    pub t0: f64,
    /// (configuration, bracketing threshold constant) per training case.
    pub thresholds: Vec<(KaplanTraining, f64)>,
    /// 2 × the largest threshold constant.
    pub c_cal: f64,
}

/// Gaussian bump of amplitude `amp` and width `w`.
pub fn gaussian_bump(lat: Lattice, amp: f64, w: f64) -> Result<SpatialField> {
    SpatialField::new(lat, (0..lat.len()).map(|i| amp * (-(lat.radius(i) / w).powi(2)).exp()).collect(), 0.0)
}

/// Does the datum blow up before T₀?
pub fn blows_up_before(prop: &Propagator, u0: &SpatialField, p: f64, t0: f64) -> Result<bool> {
    let policy = StepPolicy { t_max: t0, store_fields: false, ..Default::default() };
    let st = prop.solve(u0, p, &policy)?;
    Ok(st.status.blown_up() && st.t_end() < t0)
}

/// Pair on the calibration grid (stable kernel) for one α.
pub fn calibration_pair(kernel: &LevyKernel, alpha: f64, grid: KaplanGrid, t0: f64) -> Result<PairTable> {
    let lat = Lattice::new(kernel.dim, grid.half_width, grid.n)?;
    let sg = symbol_grid(kernel, lat)?;
    build_pair(&make_caputo(alpha)?, kernel, &sg, Mesh::new(t0 / grid.cells as f64, grid.cells)?)
}

/// Bisect (in log amplitude) the smallest Gaussian amplitude that blows up
/// before T₀ for each training case and convert it to the threshold
/// constant ball_mass/T₀^{exponent}; c_cal is twice the largest.
pub fn calibrate_kaplan(kernel: &LevyKernel, family: &[KaplanTraining], t0: f64, grid: KaplanGrid, bisections: usize) -> Result<KaplanCalibration> {
    let gamma_bar = kernel.gamma_bar().ok_or_else(|| FracError::Parameter("calibration needs a declared γ".into()))?;
    let mut thresholds = Vec::new();
    let mut alphas: Vec<f64> = family.iter().map(|c| c.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    for alpha in alphas {
        let pair = calibration_pair(kernel, alpha, grid, t0)?;
        let prop = Propagator::new(&pair)?;
        let lat = pair.grid.lattice;
        for case in family.iter().filter(|c| c.alpha == alpha) {
            let blows = |amp: f64| -> Result<bool> { blows_up_before(&prop, &gaussian_bump(lat, amp, case.width)?, case.p, t0) };
            let (mut lo, mut hi) = (1e-3, 1.0);
            while blows(lo)? {
                lo /= 10.0;
                if lo < 1e-12 {
                    return Err(FracError::Range("calibration: no non-blowing amplitude found".into()));
                }
            }
            while !blows(hi)? {
                hi *= 10.0;
                if hi > 1e8 {
                    return Err(FracError::Range("calibration: no blowing amplitude found".into()));
                }
            }
            for _ in 0..bisections {
                let mid = (lo * hi).sqrt();
                if blows(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mass = ball_mass(&gaussian_bump(lat, hi, case.width)?, t0, alpha, gamma_bar);
            thresholds.push((*case, mass / t0.powf(kaplan_exponent(kernel.dim, alpha, gamma_bar, case.p))));
        }
    }
    let c_cal = 2.0 * thresholds.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(KaplanCalibration { t0, thresholds, c_cal })
}

/// Admissible window max{p, ϖ/β} < q < min{q₁, q₂, q₃} with
/// q₁ = N/(N−β)₊, q₂ = N/(N−ϖ)₊, q₃ = αp/(αp−p+1) (∞ when a denominator
/// is ≤ 0).
pub fn theta_q_window(dim: usize, beta: f64, varpi: f64, alpha: f64, p: f64) -> Result<(f64, f64)> {
    let n = dim as f64;
    let inv = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let lower = p.max(varpi / beta);
    let bounds = [("q1 = N/(N-beta)+", inv(n, n - beta)), ("q2 = N/(N-varpi)+", inv(n, n - varpi)), ("q3 = alpha p/(alpha p - p + 1)", inv(alpha * p, alpha * p - p + 1.0))];
    for (name, q) in bounds {
        if !(q > lower) {
            return Err(FracError::Config(format!("empty θ-norm window: {name} = {q} does not exceed max(p, varpi/beta) = {lower}")));
        }
    }
    Ok((lower, bounds.iter().map(|b| b.1).fold(f64::INFINITY, f64::min)))
}

/// θ = αN(q−1)/(ϖq).
pub fn theta_exponent(dim: usize, alpha: f64, varpi: f64, q: f64) -> f64 {
    alpha * dim as f64 * (q - 1.0) / (varpi * q)
}

/// A q inside the window: midpoint, or lower·1.5 when unbounded above.
pub fn pick_theta_q(window: (f64, f64)) -> f64 {
    if window.1.is_finite() {
        0.5 * (window.0 + window.1)
    } else {
        1.5 * window.0
    }
}

/// (1 + t)^θ‖u(t)‖_q per node and its running sup.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSeries {
    pub q: f64,
    pub theta: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub running_sup: Vec<f64>,
}

impl ThetaSeries {
    pub fn from_norms(q: f64, theta: f64, times: Vec<f64>, norms: &[f64]) -> Self {
        let values: Vec<f64> = times.iter().zip(norms).map(|(t, v)| (1.0 + t).powf(theta) * v).collect();
        let mut s: f64 = 0.0;
        let running_sup = values.iter().map(|&v| {
            s = s.max(v);
            s
        }).collect();
        ThetaSeries { q, theta, times, values, running_sup }
    }

    pub fn sup(&self) -> f64 {
        self.running_sup.last().copied().unwrap_or(0.0)
    }
}

/// θ-weighted series of a state with stored fields, after checking the window.
pub fn theta_weighted_norm(state: &SolutionState, q: f64, alpha: f64, beta: f64, varpi: f64) -> Result<ThetaSeries> {
    let p = state.p.ok_or_else(|| FracError::Parameter("θ-norm needs a semilinear state".into()))?;
    let dim = state.lattice.dim;
    let (lo, hi) = theta_q_window(dim, beta, varpi, alpha, p)?;
    if !(q > lo && q < hi) {
        return Err(FracError::Config(format!("q = {q} outside the admissible window ({lo}, {hi})")));
    }
    if state.fields.len() != state.times.len() {
        return Err(FracError::Unsupported("θ-norm needs stored fields".into()));
    }
    let dv = state.lattice.cell_volume();
    let norms: Vec<f64> = state.fields.iter().map(|u| lattice_norm(u, dv, q)).collect();
    Ok(ThetaSeries::from_norms(q, theta_exponent(dim, alpha, varpi, q), state.times.clone(), &norms))
}

/// θ-weighted series of the free evolution Z_t∗u₀ at the given mesh nodes.
pub fn free_theta_series(pair: &PairTable, u0: &SpatialField, q: f64, theta: f64, nodes: &[usize]) -> Result<ThetaSeries> {
    let tr = Transform::new(pair.grid.lattice);
    let hat = tr.forward(&u0.values);
    let dv = pair.grid.lattice.cell_volume();
    let mut times = Vec::with_capacity(nodes.len());
    let mut norms = Vec::with_capacity(nodes.len());
    for &n in nodes {
        if n > pair.mesh.cells {
            return Err(FracError::Range(format!("node {n} outside the mesh")));
        }
        let z = &pair.zhat[n];
        let spec: Vec<_> = hat.iter().enumerate().map(|(i, v)| v * z[pair.grid.index[i] as usize]).collect();
        norms.push(lattice_norm(&tr.inverse(&spec), dv, q));
        times.push(pair.mesh.node(n));
    }
    Ok(ThetaSeries::from_norms(q, theta, times, &norms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fujita_arithmetic() {
        assert_eq!(fujita_exponent(1, 1.0).unwrap(), 2.0);
        assert_eq!(fujita_exponent(2, 2.0).unwrap(), 2.0);
        assert_eq!(fujita_exponent(1, 3.0).unwrap(), 3.0);
        for n in 1..4 {
            for g in [0.5, 1.0, 1.5, 2.0, 2.5] {
                assert!(fujita_exponent(n + 1, g).unwrap() <= fujita_exponent(n, g).unwrap());
                assert!(fujita_exponent(n, g + 0.25).unwrap() >= fujita_exponent(n, g).unwrap());
            }
        }
    }

    #[test]
    fn delta_and_delta_prime_agree_at_q_over_p() {
        for (n, beta, varpi) in [(1, 1.0, 1.0), (2, 1.5, 1.8), (3, 1.9, 2.0)] {
            let p = 1.0 + varpi / n as f64;
            for q in [p + 0.1, 2.0 * p, 10.0 * p] {
                for t in [0.5, 2.0, 100.0] {
                    assert_eq!(delta(q / p, q, t, n, beta, varpi), delta_prime(q / p, q, t, n, beta, varpi));
                }
            }
        }
    }

    #[test]
    fn test_function_is_c2_monotone_and_curvature_bounded() {
        for (n, g) in [(1, 1.0), (2, 0.5), (1, 1.99)] {
            let f = TestFunction::new(n, 4.0, g).unwrap();
            let h = 1e-6;
            for z in [1.0, 2.0] {
                let l = f.psi(z - h);
                let r = f.psi(z + h);
                assert!((l - r).abs() < 1e-5);
                assert!((f.psi_second(z - h) - f.psi_second(z + h)).abs() < 1e-4);
            }
            let mut prev = 2.0;
            for i in 0..2000 {
                let r = 0.01 * i as f64;
                let v = f.value(r);
                assert!(v > 0.0 && v <= prev + 1e-15);
                prev = v;
                if r > 0.0 {
                    assert!(f.psi_second(r / 4.0).abs() / 16.0 <= 100.0 * v / (r * r), "r = {r}");
                }
            }
        }
    }

    #[test]
    fn theta_window_arithmetic() {
        let (lo, hi) = theta_q_window(1, 1.0, 1.0, 0.5, 3.0).unwrap();
        assert_eq!(lo, 3.0);
        assert!(hi.is_infinite());
        // q₃ = 0.8·1.5/(1.2 − 1.5 + 1) = 1.714… < p = 1.5? No: 1.714 > 1.5.
        let (lo, hi) = theta_q_window(1, 1.0, 1.0, 0.8, 1.5).unwrap();
        assert_eq!(lo, 1.5);
        assert!((hi - 1.2 / 0.7).abs() < 1e-12);
        let e = theta_q_window(3, 1.0, 2.0, 0.5, 1.2).unwrap_err();
        assert!(format!("{e}").contains("q1"), "{e}");
        assert!((theta_exponent(1, 0.5, 1.0, 4.0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn kaplan_certificate_basics() {
        let lat = Lattice::new(1, 64.0, 512).unwrap();
        let zero = SpatialField::new(lat, vec![0.0; 512], 0.0).unwrap();
        assert_eq!(kaplan_certificate(&zero, 10.0, 0.5, 1.0, 1.5, 1.0), KaplanVerdict::Inconclusive);
        assert_eq!(kaplan_exponent(1, 0.5, 1.0, 1.5), -0.5);
        let bump = gaussian_bump(lat, 1.0, 1.0).unwrap();
        // Fixed mass certifies for large enough T₀ when the exponent is negative.
        assert_eq!(kaplan_certificate(&bump, 1.0, 0.5, 1.0, 1.5, 1.0), KaplanVerdict::Inconclusive);
        assert_eq!(kaplan_certificate(&bump, 1e3, 0.5, 1.0, 1.5, 1.0), KaplanVerdict::CertifiedBlowupBeforeT0);
    }
}
