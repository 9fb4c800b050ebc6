//! Periodic lattice on [−L, L)ᴺ, its frequency lattice ξ_k = πk/L, the
//! symbol sampled on it, and transforms normalized like the continuous
//! Fourier transform ĝ(ξ) = ∫g(x)e^{−ix·ξ}dx.
//!
//! With x_j = −L + jΔx the discrete transform is Δxᴺ(−1)^{Σk}·DFT(g), and
//! the inverse is (2L)^{−N}Σ_k ĝ_k e^{iξ_k·x}.

use crate::error::{FracError, Result};
use crate::levy::LevyKernel;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Periodic box [−L, L)ᴺ with n points per dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub half_width: f64,
    pub n: usize,
}

impl Lattice {
    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(FracError::Unsupported(format!("dimension N = {dim} (supported: 1, 2)")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(FracError::Parameter(format!("box half-width must be positive, got {half_width}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(FracError::Parameter(format!("points per dimension must be a power of two >= 4, got {n}")));
        }
        Ok(Lattice { dim, half_width, n })
    }

    /// Total number of sites nᴺ.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Cell volume Δxᴺ.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Coordinate of index j along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Signed frequency index of FFT position j.
    pub fn signed_index(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Axis indices of a flat site (row-major, last axis fastest).
    pub fn axes(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    /// |x| at a flat site.
    pub fn radius(&self, flat: usize) -> f64 {
        let a = self.axes(flat);
        (0..self.dim).map(|d| self.coord(a[d]).powi(2)).sum::<f64>().sqrt()
    }

    /// Integer radius key Σk_i² of a flat frequency position.
    pub fn freq_key(&self, flat: usize) -> u64 {
        let a = self.axes(flat);
        (0..self.dim).map(|d| self.signed_index(a[d]).pow(2) as u64).sum()
    }

    /// |ξ| for an integer radius key.
    pub fn xi_of_key(&self, key: u64) -> f64 {
        std::f64::consts::PI * (key as f64).sqrt() / self.half_width
    }

    /// |ξ| at a flat frequency position.
    pub fn xi_abs(&self, flat: usize) -> f64 {
        self.xi_of_key(self.freq_key(flat))
    }

    /// Largest |ξ| on one axis (Nyquist).
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * (self.n / 2) as f64 / self.half_width
    }

    /// Field of f(|x|) on the lattice.
    pub fn radial_field<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.radius(i))).collect()
    }
}

/// Symbol sampled on the frequency lattice, deduplicated by the exact
/// integer radius key (values depend on |ξ| only).
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    pub lattice: Lattice,
    /// Distinct radius keys, ascending.
    pub keys: Vec<u64>,
    /// |ξ| per distinct radius.
    pub xi: Vec<f64>,
    /// m per distinct radius.
    pub values: Vec<f64>,
    /// Distinct-radius index of each flat frequency position.
    pub index: Vec<u32>,
}

impl SymbolGrid {
    /// Number of distinct radii.
    pub fn radii(&self) -> usize {
        self.keys.len()
    }

    /// m at a flat frequency position.
    pub fn m_at(&self, flat: usize) -> f64 {
        self.values[self.index[flat] as usize]
    }

    /// Deduplicated radius structure with symbol values from `m`.
    pub fn from_fn<F: Fn(f64) -> Result<f64> + Sync>(lattice: Lattice, m: F) -> Result<Self> {
        let mut keys: Vec<u64> = (0..lattice.len()).map(|i| lattice.freq_key(i)).collect();
        let raw = keys.clone();
        keys.sort_unstable();
        keys.dedup();
        let pos: HashMap<u64, u32> = keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        let index = raw.iter().map(|k| pos[k]).collect();
        let xi: Vec<f64> = keys.iter().map(|&k| lattice.xi_of_key(k)).collect();
        let values = xi.par_iter().map(|&x| m(x)).collect::<Result<Vec<_>>>()?;
        if let Some(v) = values.iter().find(|v| !(**v >= -1e-12)) {
            return Err(FracError::Numeric(format!("negative symbol value {v}")));
        }
        Ok(SymbolGrid { lattice, keys, xi, values, index })
    }
}

/// Symbol of `kernel` on every lattice frequency (parallel over radii).
pub fn symbol_grid(kernel: &LevyKernel, lattice: Lattice) -> Result<SymbolGrid> {
    if kernel.dim != lattice.dim {
        return Err(FracError::Parameter(format!("kernel dimension {} != lattice dimension {}", kernel.dim, lattice.dim)));
    }
    SymbolGrid::from_fn(lattice, |x| kernel.symbol(x))
}

/// Real field on the lattice.
#[derive(Debug, Clone)]
pub struct SpatialField {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub time: f64,
}

impl SpatialField {
    pub fn new(lattice: Lattice, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(FracError::Parameter(format!("field has {} values, lattice has {}", values.len(), lattice.len())));
        }
        Ok(SpatialField { lattice, values, time })
    }

    /// Riemann-sum integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.lattice.cell_volume()
    }

    /// Lattice L^q norm; q = ∞ is the maximum modulus.
    pub fn norm(&self, q: f64) -> f64 {
        lattice_norm(&self.values, self.lattice.cell_volume(), q)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// (Σ|v|^q dv)^{1/q}, or max|v| for q = ∞.
pub fn lattice_norm(v: &[f64], dv: f64, q: f64) -> f64 {
    if q.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if q == 1.0 {
        v.iter().map(|x| x.abs()).sum::<f64>() * dv
    } else if q == 2.0 {
        (v.iter().map(|x| x * x).sum::<f64>() * dv).sqrt()
    } else {
        (v.iter().map(|x| x.abs().powf(q)).sum::<f64>() * dv).powf(1.0 / q)
    }
}

/// Forward and inverse transforms on one lattice.
#[derive(Clone)]
pub struct Transform {
    pub lattice: Lattice,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// (−1)^{Σk} per flat position.
    phase: Vec<f64>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("lattice", &self.lattice).finish()
    }
}

impl Transform {
    pub fn new(lattice: Lattice) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(lattice.n);
        let inv = planner.plan_fft_inverse(lattice.n);
        let phase = (0..lattice.len())
            .map(|i| {
                let a = lattice.axes(i);
                let s: usize = (0..lattice.dim).map(|d| a[d]).sum();
                if s % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Transform { lattice, fwd, inv, phase }
    }

    fn fft_nd(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.lattice.n;
        plan.process(buf);
        if self.lattice.dim == 2 {
            // Rows were transformed as one batch above; now the columns.
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = buf[r * n + c];
                }
                plan.process(&mut col);
                for r in 0..n {
                    buf[r * n + c] = col[r];
                }
            }
        }
    }

    /// ĝ_k (continuous normalization) of a real field.
    pub fn forward(&self, g: &[f64]) -> Vec<Complex64> {
        let dv = self.lattice.cell_volume();
        let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_nd(&mut buf, &self.fwd);
        for (b, p) in buf.iter_mut().zip(&self.phase) {
            *b *= dv * p;
        }
        buf
    }

    /// Real part of the inverse transform of a spectrum.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let norm = (2.0 * self.lattice.half_width).powi(-(self.lattice.dim as i32));
        let mut buf: Vec<Complex64> = spec.iter().zip(&self.phase).map(|(s, p)| s * p).collect();
        self.fft_nd(&mut buf, &self.inv);
        buf.iter().map(|c| c.re * norm).collect()
    }

    /// Flat positions whose last-axis index is ≤ n/2: enough to recover the
    /// spectrum of a real field by Hermitian symmetry.
    pub fn half_positions(&self) -> Vec<usize> {
        let n = self.lattice.n;
        (0..self.lattice.len()).filter(|&i| i % n <= n / 2).collect()
    }

    /// Forward transform restricted to [`Transform::half_positions`].
    pub fn forward_half(&self, g: &[f64], half: &[usize]) -> Vec<Complex64> {
        let full = self.forward(g);
        half.iter().map(|&i| full[i]).collect()
    }

    /// Inverse transform of a Hermitian spectrum given on the half positions.
    pub fn inverse_half(&self, spec: &[Complex64], half: &[usize]) -> Vec<f64> {
        let n = self.lattice.n;
        let mut full = vec![Complex64::new(0.0, 0.0); self.lattice.len()];
        for (&i, &v) in half.iter().zip(spec) {
            full[i] = v;
        }
        for i in 0..self.lattice.len() {
            if i % n > n / 2 {
                let a = self.lattice.axes(i);
                let mirror = if self.lattice.dim == 1 { (n - a[0]) % n } else { ((n - a[0]) % n) * n + (n - a[1]) % n };
                full[i] = full[mirror].conj();
            }
        }
        self.inverse(&full)
    }

    /// Inverse transform of a radial multiplier given per distinct radius.
    pub fn inverse_radial(&self, grid: &SymbolGrid, per_radius: &[f64]) -> Vec<f64> {
        let spec: Vec<Complex64> = grid.index.iter().map(|&r| Complex64::new(per_radius[r as usize], 0.0)).collect();
        self.inverse(&spec)
    }

    /// Apply a radial multiplier to a real field.
    pub fn multiply_radial(&self, grid: &SymbolGrid, g: &[f64], per_radius: &[f64]) -> Vec<f64> {
        let mut s = self.forward(g);
        for (v, &r) in s.iter_mut().zip(&grid.index) {
            *v *= per_radius[r as usize];
        }
        self.inverse(&s)
    }
}

/// Periodic convolution (f ∗ g)(x) = ∫f(x−y)g(y)dy on the lattice.
pub fn convolve(tr: &Transform, f: &[f64], g: &[f64]) -> Vec<f64> {
    let a = tr.forward(f);
    let b = tr.forward(g);
    let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    tr.inverse(&prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_transform_matches_closed_form() {
        let lat = Lattice::new(1, 20.0, 256).unwrap();
        let tr = Transform::new(lat);
        let g = lat.radial_field(|r| (-r * r / 2.0).exp());
        let s = tr.forward(&g);
        for (k, v) in s.iter().enumerate() {
            let xi = lat.signed_index(k) as f64 * std::f64::consts::PI / 20.0;
            let want = (2.0 * std::f64::consts::PI).sqrt() * (-xi * xi / 2.0).exp();
            assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12, "k={k}");
        }
        let back = tr.inverse(&s);
        assert!(back.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn two_dimensional_round_trip_and_mass() {
        let lat = Lattice::new(2, 10.0, 64).unwrap();
        let tr = Transform::new(lat);
        let g = lat.radial_field(|r| (-r * r).exp());
        let s = tr.forward(&g);
        let mass = SpatialField::new(lat, g.clone(), 0.0).unwrap().mass();
        assert!((s[0].re - mass).abs() < 1e-12);
        assert!((mass - std::f64::consts::PI).abs() < 1e-10);
        let back = tr.inverse(&s);
        assert!(back.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn half_spectrum_round_trip() {
        for dim in [1, 2] {
            let lat = Lattice::new(dim, 6.0, 16).unwrap();
            let tr = Transform::new(lat);
            let half = tr.half_positions();
            let g: Vec<f64> = (0..lat.len()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            let back = tr.inverse_half(&tr.forward_half(&g, &half), &half);
            assert!(back.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-13), "dim {dim}");
        }
    }

    #[test]
    fn dedup_uses_exact_keys() {
        let lat = Lattice::new(2, 5.0, 16).unwrap();
        let grid = SymbolGrid::from_fn(lat, |x| Ok(x * x)).unwrap();
        // Radii k1²+k2² with |k_i| ≤ 8: far fewer than 256 sites.
        assert!(grid.radii() < 60);
        for i in 0..lat.len() {
            assert!((grid.m_at(i) - lat.xi_abs(i).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_lattices() {
        assert!(Lattice::new(1, 1.0, 100).is_err());
        assert!(Lattice::new(3, 1.0, 16).is_err());
        assert!(Lattice::new(1, -1.0, 16).is_err());
    }
}
