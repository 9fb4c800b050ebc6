//! No-memory heat kernel G_t = (e^{−m(ξ)t})^∨ on the periodic lattice and its
//! decay structure.

use crate::error::{FracError, Result};
use crate::levy::{ls_slope, LevyKernel};
use crate::spectral::{convolve, lattice_norm, symbol_grid, Lattice, SpatialField, SymbolGrid, Transform};

/// Spectral tail above which a field counts as under-resolved.
pub const RESOLUTION_TOL: f64 = 1e-8;

/// A field with the size of its multiplier at the Nyquist frequency.
#[derive(Debug, Clone)]
pub struct ResolvedField {
    pub field: SpatialField,
    /// Multiplier at |ξ| = Nyquist relative to the zero mode.
    pub tail: f64,
}

impl ResolvedField {
    pub fn resolved(&self) -> bool {
        self.tail <= RESOLUTION_TOL
    }

    /// Human-readable warning when under-resolved.
    pub fn warning(&self) -> Option<String> {
        (!self.resolved()).then(|| format!("spectrally under-resolved at t = {}: Nyquist multiplier {:.3e}", self.field.time, self.tail))
    }
}

/// Index of the distinct radius at the axis Nyquist frequency.
pub fn nyquist_radius(grid: &SymbolGrid) -> usize {
    let key = (grid.lattice.n as u64 / 2).pow(2);
    grid.keys.binary_search(&key).unwrap_or(grid.keys.len() - 1)
}

/// e^{−m t} per distinct radius.
pub fn heat_multiplier(grid: &SymbolGrid, t: f64) -> Vec<f64> {
    grid.values.iter().map(|m| (-m * t).exp()).collect()
}

/// G_t on the lattice.
pub fn heat_kernel_field(grid: &SymbolGrid, t: f64) -> Result<ResolvedField> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(FracError::Parameter(format!("heat kernel needs t > 0, got {t}")));
    }
    let mult = heat_multiplier(grid, t);
    let tr = Transform::new(grid.lattice);
    let values = tr.inverse_radial(grid, &mult);
    let tail = mult[nyquist_radius(grid)];
    Ok(ResolvedField { field: SpatialField::new(grid.lattice, values, t)?, tail })
}

/// ‖G_t ∗ G_s − G_{t+s}‖₁ with the convolution done in physical space data.
pub fn semigroup_defect(grid: &SymbolGrid, t: f64, s: f64) -> Result<f64> {
    let tr = Transform::new(grid.lattice);
    let gt = heat_kernel_field(grid, t)?.field;
    let gs = heat_kernel_field(grid, s)?.field;
    let gts = heat_kernel_field(grid, t + s)?.field;
    let conv = convolve(&tr, &gt.values, &gs.values);
    let diff: Vec<f64> = conv.iter().zip(&gts.values).map(|(a, b)| a - b).collect();
    Ok(lattice_norm(&diff, grid.lattice.cell_volume(), 1.0))
}

/// Frequency ξ* with m(ξ*)·h = 1 (bisection in log ξ); the natural length
/// scale of a field whose multiplier depends on m·h.
pub fn characteristic_frequency<F: Fn(f64) -> Result<f64>>(m: F, h: f64) -> Result<f64> {
    let target = 1.0 / h;
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while m(hi)? < target {
        hi *= 8.0;
        if hi > 1e12 {
            return Err(FracError::Range(format!("symbol never reaches {target:.3e}; no characteristic frequency")));
        }
    }
    while m(lo)? > target {
        lo /= 8.0;
        if lo < 1e-12 {
            return Ok(lo);
        }
    }
    if hi == lo {
        return Ok(lo);
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if m(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-10 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Lattice of n points with half-width `spread`/ξ*, i.e. scaled to the
/// field's own length.
pub fn scaled_lattice(kernel: &LevyKernel, h: f64, n: usize, spread: f64) -> Result<Lattice> {
    let xs = characteristic_frequency(|x| kernel.symbol(x), h)?;
    Lattice::new(kernel.dim, spread / xs, n)
}

/// Resolution of the per-time lattices used by decay fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayGrid {
    /// Points per dimension.
    pub n: usize,
    /// Half-width in units of the characteristic length 1/ξ*.
    pub spread: f64,
    /// Sample times per decade.
    pub per_decade: usize,
}

impl Default for DecayGrid {
    fn default() -> Self {
        DecayGrid { n: 4096, spread: 64.0, per_decade: 4 }
    }
}

/// One log-log slope fit of a norm against time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub label: String,
    pub q: f64,
    pub window: (f64, f64),
    pub slope: f64,
    pub expected: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

impl DecayFit {
    /// |slope − expected| relative to |expected| (absolute when expected = 0).
    pub fn rel_error(&self) -> f64 {
        let d = (self.slope - self.expected).abs();
        if self.expected == 0.0 {
            d
        } else {
            d / self.expected.abs()
        }
    }

    /// Decay at least as fast as the bound, up to 0.1.
    pub fn respects_bound(&self) -> bool {
        self.slope <= self.expected + 0.1
    }

    pub fn from_samples(label: &str, q: f64, times: Vec<f64>, norms: Vec<f64>, expected: f64) -> Self {
        let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        let ln: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
        DecayFit {
            label: label.to_string(),
            q,
            window: (times[0], *times.last().unwrap()),
            slope: ls_slope(&lt, &ln),
            expected,
            times,
            norms,
        }
    }
}

/// Slope fits of several norms with a bound check against a constant
/// calibrated at the sample nearest t = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub fits: Vec<DecayFit>,
    /// Largest norm/(C·bound) over every sample (≤ 1 passes).
    pub worst_bound_ratio: f64,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(|f| f.respects_bound()) && self.worst_bound_ratio <= 1.0
    }

    /// Largest relative slope error.
    pub fn worst_rel_error(&self) -> f64 {
        self.fits.iter().map(|f| f.rel_error()).fold(0.0, f64::max)
    }

    /// Calibrate C per q from the sample nearest t = 1 (factor 2 headroom)
    /// and compare every sample against C·t^{slope}.
    pub fn assemble(fits: Vec<DecayFit>) -> Self {
        let mut worst: f64 = 0.0;
        let mut qs: Vec<f64> = fits.iter().map(|f| f.q).collect();
        qs.dedup();
        for q in qs {
            let group: Vec<&DecayFit> = fits.iter().filter(|f| f.q == q).collect();
            let bound = |f: &DecayFit, t: f64| t.powf(f.expected);
            let mut best = (f64::INFINITY, 0.0);
            for f in &group {
                for (t, v) in f.times.iter().zip(&f.norms) {
                    let d = t.ln().abs();
                    if d < best.0 {
                        best = (d, v / bound(f, *t));
                    }
                }
            }
            let c = 2.0 * best.1;
            for f in &group {
                for (t, v) in f.times.iter().zip(&f.norms) {
                    worst = worst.max(v / (c * bound(f, *t)));
                }
            }
        }
        DecayReport { fits, worst_bound_ratio: worst }
    }
}

/// Log-spaced sample times covering [lo, hi].
pub fn log_times(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let k = ((hi / lo).log10() * per_decade as f64).round().max(1.0) as usize;
    (0..=k).map(|i| lo * (hi / lo).powf(i as f64 / k as f64)).collect()
}

/// Norms ‖G_t‖_q on per-time lattices scaled to the characteristic length.
pub fn heat_norms(kernel: &LevyKernel, times: &[f64], qs: &[f64], grid: DecayGrid) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(times.len()); qs.len()];
    for &t in times {
        let lat = scaled_lattice(kernel, t, grid.n, grid.spread)?;
        let sg = symbol_grid(kernel, lat)?;
        let g = heat_kernel_field(&sg, t)?.field;
        for (o, &q) in out.iter_mut().zip(qs) {
            o.push(g.norm(q));
        }
    }
    Ok(out)
}

/// Slope fits of ‖G_t‖_q, q ∈ `qs`, on a window below and a window above
/// t = 1, against −N/β(1−1/q) and −N/ϖ(1−1/q).
pub fn verify_heat_decay(kernel: &LevyKernel, small: (f64, f64), large: (f64, f64), qs: &[f64], grid: DecayGrid) -> Result<DecayReport> {
    let beta = kernel.beta.ok_or_else(|| FracError::Parameter("heat decay needs a declared β".into()))?;
    let varpi = kernel.varpi().ok_or_else(|| FracError::Parameter("heat decay needs a declared ω".into()))?;
    let n = kernel.dim as f64;
    let mut fits = Vec::new();
    for (label, (lo, hi), exponent) in [("G small t", small, beta), ("G large t", large, varpi)] {
        let times = log_times(lo, hi, grid.per_decade);
        let norms = heat_norms(kernel, &times, qs, grid)?;
        for (&q, v) in qs.iter().zip(norms) {
            let expected = -n / exponent * (1.0 - 1.0 / q);
            fits.push(DecayFit::from_samples(label, q, times.clone(), v, expected));
        }
    }
    Ok(DecayReport::assemble(fits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_symbol_heat_kernel_mass_and_positivity() {
        let k = LevyKernel::stable(1, 1.0).unwrap();
        let lat = Lattice::new(1, 64.0, 4096).unwrap();
        let sg = symbol_grid(&k, lat).unwrap();
        let g = heat_kernel_field(&sg, 0.5).unwrap();
        assert!(g.resolved());
        assert!((g.field.mass() - 1.0).abs() < 1e-13);
        // Cauchy density t/(π(t²+x²)) at the origin.
        let peak = g.field.max();
        assert!((peak - 1.0 / (std::f64::consts::PI * 0.5)).abs() < 1e-3);
    }

    #[test]
    fn under_resolution_is_flagged() {
        let k = LevyKernel::stable(1, 1.0).unwrap();
        let lat = Lattice::new(1, 64.0, 256).unwrap();
        let sg = symbol_grid(&k, lat).unwrap();
        let g = heat_kernel_field(&sg, 1e-3).unwrap();
        assert!(!g.resolved() && g.warning().is_some());
    }

    #[test]
    fn semigroup_holds_to_round_off() {
        let k = LevyKernel::stable(1, 1.5).unwrap();
        let lat = Lattice::new(1, 32.0, 1024).unwrap();
        let sg = symbol_grid(&k, lat).unwrap();
        assert!(semigroup_defect(&sg, 0.3, 0.7).unwrap() < 1e-12);
    }

    #[test]
    fn stable_decay_slopes() {
        let k = LevyKernel::stable(1, 1.0).unwrap();
        let r = verify_heat_decay(&k, (0.01, 1.0), (1.0, 100.0), &[2.0, f64::INFINITY], DecayGrid { n: 1024, ..Default::default() }).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.worst_rel_error() < 0.01, "{r:?}");
    }
}
