//! Mild solutions u = Z_t∗u₀ + ∫₀ᵗ Y_{t−τ}∗u^p(τ)dτ by spectral product
//! integration with the full memory history, plus blow-up detection by step
//! refinement and the comparison / weak-form / re-assembly checks.
//!
//! Every node satisfies the discrete Duhamel relation
//! û_n = ρ₁(t_n)û₀ + Σ_i W_{n,i} (u^p)^(t_i), where W are the ρ₂ product
//! weights of a piecewise-linear interpolant of u^p in time. On the uniform
//! mesh the weights depend on n − i only and the history sum is evaluated in
//! cache blocks. Once the corrector struggles or the norm doubles within a
//! step, the solver switches to halved, non-uniform steps (Caputo and
//! classical pairs only); the distant uniform history is then interpolated
//! in the time offset on Chebyshev nodes, the recent cells get exact weights.

use crate::error::{FracError, Result};
use crate::pair::PairTable;
use crate::spectral::{lattice_norm, Lattice, SpatialField, Transform};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

/// Targets per cache block of the uniform history sum.
const BLOCK: usize = 32;
/// Frequencies per parallel chunk of the history sum.
const CHUNK: usize = 128;
/// Uniform cells closer than this many steps get exact weights after refinement.
const NEAR_CELLS: usize = 16;
/// Interpolation targets of the far history, in cells past the window start.
const FAR_TARGETS: [i64; 6] = [-2, -1, 0, 1, 2, 3];
const CHEB: usize = FAR_TARGETS.len();
/// Stiffness p·C₀·‖u‖^{p−1} above which a step collapse counts as blow-up.
const STIFFNESS: f64 = 0.1;
/// Stored differences in the Anderson-accelerated corrector.
const ANDERSON_DEPTH: usize = 4;

/// Step control and stopping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPolicy {
    /// Final time (capped by the pair's mesh).
    pub t_max: f64,
    /// ‖u‖_∞ at which blow-up is declared.
    pub u_max: f64,
    /// Smallest refined step.
    pub dt_min: f64,
    /// Corrector iterations per node (K).
    pub max_iterations: usize,
    /// Relative sup-norm tolerance of the corrector.
    pub fp_tol: f64,
    /// Norm growth per step that triggers refinement.
    pub growth_limit: f64,
    /// Allow non-uniform refinement (needs relaxation values off the mesh).
    pub refine: bool,
    /// Keep u(·, t_n) for every node (otherwise only the latest).
    pub store_fields: bool,
    /// Budget of refined steps before giving up.
    pub max_refined_steps: usize,
    /// Extra L^q norm recorded per node (e.g. for the θ-weighted norm).
    pub norm_q: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            t_max: f64::INFINITY,
            u_max: 1e8,
            dt_min: 1e-10,
            max_iterations: 10,
            fp_tol: 1e-10,
            growth_limit: 2.0,
            refine: true,
            store_fields: true,
            max_refined_steps: 4000,
            norm_q: None,
        }
    }
}

/// Outcome of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Running,
    /// Reached the final time.
    Global,
    /// Declared blow-up: last accepted node, bracketing interval and norm there.
    BlownUp { t_b: f64, bracket: (f64, f64), norm: f64 },
    Failed(String),
}

impl Status {
    pub fn blown_up(&self) -> bool {
        matches!(self, Status::BlownUp { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Global => "global",
            Status::BlownUp { .. } => "blown_up",
            Status::Failed(_) => "failed",
        }
    }
}

/// Norms of one accepted node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeNorms {
    pub t: f64,
    pub norm1: f64,
    pub norm2: f64,
    pub norminf: f64,
    /// ‖u‖_q for the tracked q (NaN when none is tracked).
    pub norm_q: f64,
    /// Corrector iterations used (0 for linear solves).
    pub iterations: usize,
}

/// History of a run: nodes, norms, fields and the transformed right-hand side.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub lattice: Lattice,
    /// Exponent of the nonlinearity (None for linear solves).
    pub p: Option<f64>,
    pub times: Vec<f64>,
    pub norms: Vec<NodeNorms>,
    /// u(·, t_n) per node, or only the latest when fields are not stored.
    pub fields: Vec<Vec<f64>>,
    /// Half spectrum of the right-hand side (u^p, or the forcing) per node.
    pub nonlinear_hat: Vec<Vec<Complex64>>,
    pub initial_hat: Vec<Complex64>,
    pub status: Status,
    /// Largest clamped negative part, relative to ‖u‖_∞.
    pub max_clamp: f64,
    /// Number of nodes on the uniform mesh (the rest are refined).
    pub uniform_nodes: usize,
    /// Exponent of the extra tracked norm.
    pub norm_q: Option<f64>,
}

impl SolutionState {
    pub fn last_field(&self) -> &[f64] {
        self.fields.last().expect("state holds the initial field")
    }

    /// u(·, t_n) when fields are stored.
    pub fn field(&self, n: usize) -> Option<&[f64]> {
        (self.fields.len() == self.times.len()).then(|| self.fields.get(n).map(|v| v.as_slice())).flatten()
    }

    /// Final time reached (blow-up time when blown up).
    pub fn t_end(&self) -> f64 {
        match self.status {
            Status::BlownUp { t_b, .. } => t_b,
            _ => *self.times.last().unwrap(),
        }
    }

    /// Largest ‖u‖_∞ over the run.
    pub fn sup_norm(&self) -> f64 {
        self.norms.iter().map(|n| n.norminf).fold(0.0, f64::max)
    }
}

/// Corrector result at one node.
struct Corrected {
    u: Vec<f64>,
    fhat: Vec<Complex64>,
    iterations: usize,
    converged: bool,
    clamp: f64,
}

/// Anderson mixing for the fixed point u = G(u): the next iterate is
/// G(u_k) − Σγ_jΔG_j with γ minimising ‖r_k − Σγ_jΔr_j‖₂, r = G(u) − u.
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dg: Vec<Vec<f64>>,
    dr: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, last: None, dg: Vec::new(), dr: Vec::new() }
    }

    fn next(&mut self, g: Vec<f64>, r: Vec<f64>) -> Vec<f64> {
        if let Some((g0, r0)) = self.last.take() {
            if self.dg.len() == self.depth {
                self.dg.remove(0);
                self.dr.remove(0);
            }
            self.dg.push(g.iter().zip(&g0).map(|(a, b)| a - b).collect());
            self.dr.push(r.iter().zip(&r0).map(|(a, b)| a - b).collect());
        }
        let m = self.dr.len();
        let mut out = g.clone();
        if m > 0 {
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let mut a = vec![vec![0.0; m + 1]; m];
            for i in 0..m {
                for j in 0..m {
                    a[i][j] = dot(&self.dr[i], &self.dr[j]);
                }
                a[i][m] = dot(&self.dr[i], &r);
            }
            let trace: f64 = (0..m).map(|i| a[i][i]).sum();
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += 1e-12 * trace + f64::MIN_POSITIVE;
            }
            if let Some(gamma) = solve_small(a) {
                for (gj, dg) in gamma.iter().zip(&self.dg) {
                    out.iter_mut().zip(dg).for_each(|(o, d)| *o -= gj * d);
                }
            }
        }
        self.last = Some((g, r));
        out
    }
}

/// Gaussian elimination with partial pivoting on an augmented m×(m+1) system.
fn solve_small(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if !(a[piv][c].abs() > 0.0) {
            return None;
        }
        a.swap(c, piv);
        for i in c + 1..m {
            let f = a[i][c] / a[c][c];
            for j in c..=m {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][m] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Parameters of one semilinear run.
struct Run<'p> {
    p: f64,
    policy: &'p StepPolicy,
    t_end: f64,
    u0_sup: f64,
}

impl Run<'_> {
    /// A collapsed step is attributed to blow-up when the norm has grown by
    /// 10³, or when the nonlinear stiffness p·C₀·‖u‖^{p−1} of the newest cell
    /// is still O(1): the local blow-up time scale is then below the step.
    fn growth_limited(&self, prev: f64, c0: &[f64]) -> bool {
        let c0 = c0.iter().cloned().fold(0.0, f64::max);
        prev > 1e3 * self.u0_sup || self.p * c0 * prev.powf(self.p - 1.0) >= STIFFNESS
    }
}

/// Far-history interpolant after refinement.
struct FarHistory {
    window: usize,
    cells: usize,
    values: Vec<Vec<Complex64>>,
}

/// Pair tables rearranged for time stepping: uniform product weights per lag
/// on the half spectrum, and the transform.
pub struct Propagator<'a> {
    pub pair: &'a PairTable,
    tr: Transform,
    half: Vec<usize>,
    rad: Vec<usize>,
    /// wl_j: weight of the node at lag (j+1)Δt within lag cell j.
    wl: Vec<Vec<f64>>,
    /// wr_j: weight of the node at lag jΔt within lag cell j.
    wr: Vec<Vec<f64>>,
    /// C_0 = wr_0 and C_j = wr_j + wl_{j−1}.
    coef: Vec<Vec<f64>>,
}

fn axpy(acc: &mut [Complex64], c: &[f64], f: &[Complex64]) {
    for ((a, &c), f) in acc.iter_mut().zip(c).zip(f) {
        a.re += c * f.re;
        a.im += c * f.im;
    }
}

fn positive_power(u: &[f64], p: f64) -> (Vec<f64>, f64) {
    let mut neg: f64 = 0.0;
    let f = u
        .iter()
        .map(|&v| {
            if v < 0.0 {
                neg = neg.max(-v);
                0.0
            } else {
                v.powf(p)
            }
        })
        .collect();
    (f, neg)
}

/// Newest nonlinearity extrapolated linearly in time from the last two nodes
/// (the previous value at the first step).
fn predict(st: &SolutionState, t: f64) -> Vec<Complex64> {
    let k = st.times.len();
    let last = &st.nonlinear_hat[k - 1];
    if k < 2 {
        return last.clone();
    }
    let r = (t - st.times[k - 1]) / (st.times[k - 1] - st.times[k - 2]);
    last.iter().zip(&st.nonlinear_hat[k - 2]).map(|(a, b)| a + (a - b) * r).collect()
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut k = keep.iter();
    v.retain(|_| *k.next().unwrap());
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn far_offsets(dt: f64) -> [f64; CHEB] {
    FAR_TARGETS.map(|k| k as f64 * dt)
}

fn lagrange_weights(nodes: &[f64; CHEB], s: f64) -> [f64; CHEB] {
    std::array::from_fn(|c| {
        let mut w = 1.0;
        for (j, &x) in nodes.iter().enumerate() {
            if j != c {
                w *= (s - x) / (nodes[c] - x);
            }
        }
        w
    })
}

impl<'a> Propagator<'a> {
    /// Precompute the uniform lag weights (O(M·R) weight evaluations).
    pub fn new(pair: &'a PairTable) -> Result<Self> {
        let lat = pair.grid.lattice;
        let tr = Transform::new(lat);
        let half = tr.half_positions();
        let rad: Vec<usize> = half.iter().map(|&i| pair.grid.index[i] as usize).collect();
        let dt = pair.mesh.dt;
        // Refinable pairs keep a few lags past the mesh for the far history.
        let lags = pair.mesh.cells + if pair.supports_refinement() { CHEB } else { 0 };
        let per_r: Vec<(Vec<f64>, Vec<f64>)> = (0..lags)
            .into_par_iter()
            .map(|j| {
                let a = j as f64 * dt;
                let mut wl = Vec::with_capacity(pair.grid.values.len());
                let mut wr = Vec::with_capacity(pair.grid.values.len());
                for r in 0..pair.grid.values.len() {
                    let (l, w) = pair.lag_weights(r, a, a + dt)?;
                    wl.push(l);
                    wr.push(w);
                }
                Ok((wl, wr))
            })
            .collect::<Result<Vec<_>>>()?;
        let expand = |row: &[f64]| -> Vec<f64> { rad.iter().map(|&r| row[r]).collect() };
        let wl: Vec<Vec<f64>> = per_r.iter().map(|(l, _)| expand(l)).collect();
        let wr: Vec<Vec<f64>> = per_r.iter().map(|(_, w)| expand(w)).collect();
        let coef: Vec<Vec<f64>> = (0..pair.mesh.cells)
            .map(|j| {
                let mut c = wr[j].clone();
                if j > 0 {
                    c.iter_mut().zip(&wl[j - 1]).for_each(|(c, l)| *c += l);
                }
                c
            })
            .collect();
        Ok(Propagator { pair, tr, half, rad, wl, wr, coef })
    }

    pub fn lattice(&self) -> Lattice {
        self.pair.grid.lattice
    }

    fn expand(&self, per_radius: &[f64]) -> Vec<f64> {
        self.rad.iter().map(|&r| per_radius[r]).collect()
    }

    fn check_field(&self, u: &SpatialField) -> Result<()> {
        if u.lattice != self.lattice() {
            return Err(FracError::Mesh("field lattice differs from the pair's lattice".into()));
        }
        if u.values.iter().any(|v| !v.is_finite()) {
            return Err(FracError::Parameter("field has non-finite values".into()));
        }
        Ok(())
    }

    /// Contributions of sources 1..n0 to targets n0..n0+count (blocked).
    fn block_sums(&self, n0: usize, count: usize, hist: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let hl = self.half.len();
        let zero = Complex64::new(0.0, 0.0);
        let starts: Vec<usize> = (0..hl).step_by(CHUNK).collect();
        let parts: Vec<(usize, Vec<Complex64>)> = starts
            .into_par_iter()
            .map(|h0| {
                let h1 = (h0 + CHUNK).min(hl);
                let w = h1 - h0;
                let mut acc = vec![zero; count * w];
                for (i, f) in hist.iter().enumerate().take(n0).skip(1) {
                    let f = &f[h0..h1];
                    for b in 0..count {
                        axpy(&mut acc[b * w..(b + 1) * w], &self.coef[n0 + b - i][h0..h1], f);
                    }
                }
                (h0, acc)
            })
            .collect();
        let mut out = vec![vec![zero; hl]; count];
        for (h0, acc) in parts {
            let w = (h0 + CHUNK).min(hl) - h0;
            for (b, o) in out.iter_mut().enumerate() {
                o[h0..h0 + w].copy_from_slice(&acc[b * w..(b + 1) * w]);
            }
        }
        out
    }

    /// Known part of û at uniform node n: Z term, f₀ term, history from
    /// `from`..n (plus the block accumulator `acc` covering 1..from).
    fn uniform_base(&self, n: usize, u0_hat: &[Complex64], hist: &[Vec<Complex64>], acc: &[Complex64], from: usize) -> Vec<Complex64> {
        let z = self.expand(&self.pair.zhat[n]);
        let mut base: Vec<Complex64> = u0_hat.iter().zip(&z).zip(acc).map(|((u, z), a)| u * z + a).collect();
        axpy(&mut base, &self.wl[n - 1], &hist[0]);
        for (i, f) in hist.iter().enumerate().take(n).skip(from.max(1)) {
            axpy(&mut base, &self.coef[n - i], f);
        }
        base
    }

    fn assemble(&self, base: &[Complex64], c0: &[f64], fhat: &[Complex64]) -> Vec<f64> {
        let mut s = base.to_vec();
        axpy(&mut s, c0, fhat);
        self.tr.inverse_half(&s, &self.half)
    }

    fn apply(&self, base: &[Complex64], c0: &[f64], u: &[f64], p: f64) -> (Vec<f64>, f64) {
        let (f, neg) = positive_power(u, p);
        (self.assemble(base, c0, &self.tr.forward_half(&f, &self.half)), neg)
    }

    /// Predictor-corrector at one node: û = base + C₀·(u^p)^. The predictor
    /// freezes the newest nonlinearity at `guess`; the corrector is the
    /// fixed-point map accelerated by Anderson mixing.
    fn correct(&self, base: &[Complex64], c0: &[f64], guess: &[Complex64], p: f64, policy: &StepPolicy) -> Corrected {
        let mut u = self.assemble(base, c0, guess);
        let mut iterations = 0;
        let mut converged = false;
        let mut best = f64::INFINITY;
        let mut clamp: f64 = 0.0;
        let mut mix = Anderson::new(ANDERSON_DEPTH);
        for k in 1..=policy.max_iterations {
            let (g, neg) = self.apply(base, c0, &u, p);
            clamp = clamp.max(neg);
            let r: Vec<f64> = g.iter().zip(&u).map(|(a, b)| a - b).collect();
            let diff = sup(&r) / sup(&g).max(f64::MIN_POSITIVE);
            iterations = k;
            if !diff.is_finite() {
                u = g;
                break;
            }
            if diff <= policy.fp_tol {
                u = g;
                converged = true;
                iterations = k - 1;
                break;
            }
            if k >= 3 && diff > 2.0 * best {
                u = g;
                break;
            }
            best = best.min(diff);
            u = mix.next(g, r);
        }
        // Store the pair (u, f̂) that satisfies the node relation exactly.
        let (f, neg) = positive_power(&u, p);
        let fhat = self.tr.forward_half(&f, &self.half);
        let scale = sup(&u).max(f64::MIN_POSITIVE);
        let u = self.assemble(base, c0, &fhat);
        Corrected { fhat, u, iterations, converged, clamp: clamp.max(neg) / scale }
    }

    fn norms(&self, u: &[f64], t: f64, iterations: usize, q: Option<f64>) -> NodeNorms {
        let dv = self.lattice().cell_volume();
        let norm_q = q.map_or(f64::NAN, |q| lattice_norm(u, dv, q));
        NodeNorms { t, norm1: lattice_norm(u, dv, 1.0), norm2: lattice_norm(u, dv, 2.0), norminf: sup(u), norm_q, iterations }
    }

    fn new_state(&self, u0: &SpatialField, p: Option<f64>, f0: Vec<Complex64>, norm_q: Option<f64>) -> SolutionState {
        let initial_hat = self.tr.forward_half(&u0.values, &self.half);
        SolutionState {
            lattice: self.lattice(),
            p,
            times: vec![0.0],
            norms: vec![self.norms(&u0.values, 0.0, 0, norm_q)],
            fields: vec![u0.values.clone()],
            nonlinear_hat: vec![f0],
            initial_hat,
            status: Status::Running,
            max_clamp: 0.0,
            uniform_nodes: 1,
            norm_q,
        }
    }

    fn push(&self, st: &mut SolutionState, t: f64, u: Vec<f64>, fhat: Vec<Complex64>, iterations: usize, store: bool) {
        st.norms.push(self.norms(&u, t, iterations, st.norm_q));
        st.times.push(t);
        st.nonlinear_hat.push(fhat);
        if !store {
            st.fields.clear();
        }
        st.fields.push(u);
    }

    /// Semilinear solve u = Z∗u₀ + ∫Y∗u^p.
    pub fn solve(&self, u0: &SpatialField, p: f64, policy: &StepPolicy) -> Result<SolutionState> {
        self.check_field(u0)?;
        if !(p > 1.0) || !p.is_finite() {
            return Err(FracError::Parameter(format!("exponent p must exceed 1, got {p}")));
        }
        if u0.min() < 0.0 {
            return Err(FracError::Parameter("initial datum must be nonnegative".into()));
        }
        let (f0, _) = positive_power(&u0.values, p);
        let mut st = self.new_state(u0, Some(p), self.tr.forward_half(&f0, &self.half), policy.norm_q);
        let run = Run { p, policy, t_end: policy.t_max.min(self.pair.mesh.t_max()), u0_sup: sup(&u0.values) };
        let mut budget = policy.max_refined_steps;
        while self.march_uniform(&mut st, &run)? {
            if !self.refine_phase(&mut st, &run, &mut budget)? {
                break;
            }
        }
        Ok(st)
    }

    /// Uniform steps from the last (uniform) node. Returns true when the
    /// step should be refined, false when the status is final.
    fn march_uniform(&self, st: &mut SolutionState, run: &Run) -> Result<bool> {
        let mesh = self.pair.mesh;
        let policy = run.policy;
        let n_end = ((run.t_end / mesh.dt) + 1e-9).floor() as usize;
        let c0 = &self.coef[0];
        let mut n0 = st.times.len();
        while n0 <= n_end {
            let count = BLOCK.min(n_end + 1 - n0);
            let acc = self.block_sums(n0, count, &st.nonlinear_hat);
            for (b, acc) in acc.iter().enumerate() {
                let n = n0 + b;
                let base = self.uniform_base(n, &st.initial_hat, &st.nonlinear_hat, acc, n0);
                let guess = predict(st, mesh.node(n));
                let c = self.correct(&base, c0, &guess, run.p, policy);
                let prev = st.norms.last().unwrap().norminf;
                let norm = sup(&c.u);
                let struggling = !c.converged || c.iterations > policy.max_iterations / 2 || norm > policy.growth_limit * prev;
                if struggling && policy.refine && self.pair.supports_refinement() {
                    return Ok(true);
                }
                if !c.converged {
                    let t_prev = mesh.node(n - 1);
                    st.status = if run.growth_limited(prev, c0) || norm >= policy.u_max {
                        Status::BlownUp { t_b: t_prev, bracket: (t_prev, mesh.node(n)), norm: prev }
                    } else {
                        Status::Failed(format!("corrector did not contract at t = {}", mesh.node(n)))
                    };
                    return Ok(false);
                }
                st.max_clamp = st.max_clamp.max(c.clamp);
                self.push(st, mesh.node(n), c.u, c.fhat, c.iterations, policy.store_fields);
                st.uniform_nodes += 1;
                if norm >= policy.u_max {
                    st.status = Status::BlownUp { t_b: mesh.node(n), bracket: (mesh.node(n - 1), mesh.node(n)), norm };
                    return Ok(false);
                }
            }
            n0 += count;
        }
        st.status = Status::Global;
        Ok(false)
    }

    /// Far history at the Chebyshev offsets of window w (cells 0..cells).
    fn far_history(&self, st: &SolutionState, window: usize) -> Result<FarHistory> {
        let ns = st.uniform_nodes - 1;
        let cells = (ns + window).saturating_sub(NEAR_CELLS).min(ns);
        let hl = self.half.len();
        // Far cells sit ≥ NEAR_CELLS − 2 lags from every target, where the
        // mesh weights are smooth in the target time.
        let values = FAR_TARGETS
            .par_iter()
            .map(|&k| {
                let mut acc = vec![Complex64::new(0.0, 0.0); hl];
                for i in 0..cells {
                    let j = ((ns + window) as i64 + k - 1 - i as i64) as usize;
                    axpy(&mut acc, &self.wl[j], &st.nonlinear_hat[i]);
                    axpy(&mut acc, &self.wr[j], &st.nonlinear_hat[i + 1]);
                }
                acc
            })
            .collect::<Vec<_>>();
        Ok(FarHistory { window, cells, values })
    }

    /// Known part of û at an arbitrary time t past the last node, and C₀.
    fn refined_base(&self, st: &SolutionState, far: &FarHistory, t: f64, s: f64) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let rr = self.pair.grid.values.len();
        let z: Vec<f64> = (0..rr).map(|r| self.pair.rho1(r, t)).collect::<Result<_>>()?;
        let z = self.expand(&z);
        let mut base: Vec<Complex64> = st.initial_hat.iter().zip(&z).map(|(u, z)| u * z).collect();
        let lw = lagrange_weights(&far_offsets(self.pair.mesh.dt), s);
        for (w, v) in lw.iter().zip(&far.values) {
            for (b, v) in base.iter_mut().zip(v) {
                *b += w * v;
            }
        }
        let last = st.times.len() - 1;
        let mut wl = vec![0.0; rr];
        let mut wr = vec![0.0; rr];
        for i in far.cells..=last {
            let b = t - st.times[i];
            let a = if i == last { 0.0 } else { t - st.times[i + 1] };
            for r in 0..rr {
                (wl[r], wr[r]) = self.pair.lag_weights(r, a, b)?;
            }
            axpy(&mut base, &self.expand(&wl), &st.nonlinear_hat[i]);
            if i < last {
                axpy(&mut base, &self.expand(&wr), &st.nonlinear_hat[i + 1]);
            }
        }
        Ok((base, self.expand(&wr)))
    }

    /// Halved, non-uniform steps from the last uniform node. Steps never
    /// cross coarse mesh nodes; after calm full-size steps the refined nodes
    /// between mesh nodes are dropped and true is returned (rejoin the
    /// uniform march). False means the status is final.
    fn refine_phase(&self, st: &mut SolutionState, run: &Run, budget: &mut usize) -> Result<bool> {
        let mesh = self.pair.mesh;
        let policy = run.policy;
        let dt = mesh.dt;
        let ns = st.uniform_nodes - 1;
        let t_s = st.times[ns];
        let mut h = 0.5 * dt;
        let mut far: Option<FarHistory> = None;
        let mut calm = 0;
        loop {
            let t_prev = *st.times.last().unwrap();
            let prev = st.norms.last().unwrap().norminf;
            if t_prev >= run.t_end * (1.0 - 1e-14) {
                st.status = Status::Global;
                return Ok(false);
            }
            if *budget == 0 {
                st.status = Status::Failed(format!("refined step budget exhausted at t = {t_prev}"));
                return Ok(false);
            }
            let next_node = ((t_prev - t_s) / dt + 1e-9).floor() + 1.0;
            let t_node = mesh.node(ns + next_node as usize);
            let h_try = h.min(run.t_end - t_prev).min(t_node - t_prev);
            let aligned = t_prev + h_try >= t_node - 1e-9 * dt;
            let t = if aligned { t_node } else { t_prev + h_try };
            let window = next_node as usize - 1;
            if far.as_ref().map_or(true, |f| f.window != window) {
                far = Some(self.far_history(st, window)?);
            }
            let s = t - t_s - window as f64 * dt;
            let (base, c0) = self.refined_base(st, far.as_ref().unwrap(), t, s)?;
            let guess = predict(st, t);
            let c = self.correct(&base, &c0, &guess, run.p, policy);
            let norm = sup(&c.u);
            let struggling = !c.converged || c.iterations > policy.max_iterations / 2 || norm > policy.growth_limit * prev;
            if struggling {
                h = 0.5 * h_try;
                calm = 0;
                if h < policy.dt_min {
                    st.status = if run.growth_limited(prev, &c0) {
                        Status::BlownUp { t_b: t_prev, bracket: (t_prev, t_prev + h_try), norm: prev }
                    } else {
                        Status::Failed(format!("step fell below dt_min at t = {t_prev} with ‖u‖∞ = {prev:.3e}"))
                    };
                    return Ok(false);
                }
                continue;
            }
            *budget -= 1;
            st.max_clamp = st.max_clamp.max(c.clamp);
            self.push(st, t, c.u, c.fhat, c.iterations, policy.store_fields);
            if norm >= policy.u_max {
                st.status = Status::BlownUp { t_b: t, bracket: (t_prev, t), norm };
                return Ok(false);
            }
            if c.iterations <= 3 && norm < 1.25 * prev {
                calm += 1;
                if aligned && h_try >= dt * (1.0 - 1e-9) && calm >= 2 {
                    self.drop_refined(st, ns);
                    return Ok(true);
                }
                if calm >= 4 && h < dt {
                    h = (2.0 * h).min(dt);
                    calm = 0;
                }
            } else {
                calm = 0;
            }
        }
    }

    /// Keep only the nodes on the coarse mesh after uniform node `ns`.
    fn drop_refined(&self, st: &mut SolutionState, ns: usize) {
        let dt = self.pair.mesh.dt;
        let keep: Vec<bool> = st
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| i <= ns || ((t / dt).round() * dt - t).abs() <= 1e-9 * dt)
            .collect();
        retain_mask(&mut st.times, &keep);
        retain_mask(&mut st.norms, &keep);
        retain_mask(&mut st.nonlinear_hat, &keep);
        if st.fields.len() == keep.len() {
            retain_mask(&mut st.fields, &keep);
        }
        for (i, t) in st.times.iter_mut().enumerate() {
            *t = self.pair.mesh.node(i);
        }
        st.uniform_nodes = st.times.len();
    }

    /// Forced linear solve u = Z∗u₀ + ∫Y∗f on the uniform mesh. `forcing`
    /// holds one field per node, or a single field for time-constant f.
    pub fn solve_linear(&self, u0: &SpatialField, forcing: &[Vec<f64>], store_fields: bool) -> Result<SolutionState> {
        self.check_field(u0)?;
        let mesh = self.pair.mesh;
        let len = self.lattice().len();
        if forcing.is_empty() || (forcing.len() != 1 && forcing.len() != mesh.cells + 1) || forcing.iter().any(|f| f.len() != len) {
            return Err(FracError::Mesh(format!("forcing must hold 1 or {} fields of {len} values", mesh.cells + 1)));
        }
        let fhat_at = |n: usize| self.tr.forward_half(&forcing[if forcing.len() == 1 { 0 } else { n }], &self.half);
        let mut st = self.new_state(u0, None, fhat_at(0), None);
        let c0 = &self.coef[0];
        let mut n0 = 1;
        while n0 <= mesh.cells {
            let count = BLOCK.min(mesh.cells + 1 - n0);
            let acc = self.block_sums(n0, count, &st.nonlinear_hat);
            for (b, acc) in acc.iter().enumerate() {
                let n = n0 + b;
                let base = self.uniform_base(n, &st.initial_hat, &st.nonlinear_hat, acc, n0);
                let fhat = fhat_at(n);
                let u = self.assemble(&base, c0, &fhat);
                self.push(&mut st, mesh.node(n), u, fhat, 0, store_fields);
                st.uniform_nodes += 1;
            }
            n0 += count;
        }
        st.status = Status::Global;
        Ok(st)
    }

    /// Re-evaluate u(·, t_n) at a uniform node from the stored history alone.
    pub fn reassemble(&self, st: &SolutionState, n: usize) -> Result<Vec<f64>> {
        if n == 0 || n >= st.uniform_nodes {
            return Err(FracError::Range(format!("node {n} is not a uniform node past the initial time")));
        }
        let zero = vec![Complex64::new(0.0, 0.0); self.half.len()];
        let base = self.uniform_base(n, &st.initial_hat, &st.nonlinear_hat, &zero, 1);
        Ok(self.assemble(&base, &self.coef[0], &st.nonlinear_hat[n]))
    }
}

/// One-shot semilinear solve.
pub fn solve(u0: &SpatialField, p: f64, pair: &PairTable, policy: &StepPolicy) -> Result<SolutionState> {
    Propagator::new(pair)?.solve(u0, p, policy)
}

/// One-shot linear solve.
pub fn solve_linear(u0: &SpatialField, forcing: &[Vec<f64>], pair: &PairTable) -> Result<SolutionState> {
    Propagator::new(pair)?.solve_linear(u0, forcing, true)
}

/// Apply the blow-up rule to a finished or running state: BlownUp when the
/// last norm reaches U_max, otherwise the status is kept.
pub fn detect_blowup(st: &mut SolutionState, policy: &StepPolicy) {
    if let Some(last) = st.norms.last() {
        if !st.status.blown_up() && last.norminf >= policy.u_max {
            let k = st.times.len() - 1;
            st.status = Status::BlownUp { t_b: st.times[k], bracket: (st.times[k.saturating_sub(1)], st.times[k]), norm: last.norminf };
        }
    }
}

/// Comparison of two ordered data u₀ ≤ v₀.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// max over common nodes of max(u − v)₊.
    pub max_violation: f64,
    /// Tolerance 10⁻⁶·‖v‖_∞ over the compared window.
    pub tolerance: f64,
    pub nodes_compared: usize,
    pub window_end: f64,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.tolerance
    }
}

/// Run both data and measure violations of u ≤ v on common nodes up to
/// 0.9·min(t_end).
pub fn comparison_check(prop: &Propagator, u0: &SpatialField, v0: &SpatialField, p: f64, policy: &StepPolicy) -> Result<ComparisonReport> {
    if u0.values.iter().zip(&v0.values).any(|(a, b)| a > b) {
        return Err(FracError::Parameter("comparison needs u₀ ≤ v₀ pointwise".into()));
    }
    let policy = StepPolicy { store_fields: true, ..policy.clone() };
    let su = prop.solve(u0, p, &policy)?;
    let sv = prop.solve(v0, p, &policy)?;
    let window_end = 0.9 * su.t_end().min(sv.t_end());
    let mut worst: f64 = 0.0;
    let mut vsup: f64 = 0.0;
    let mut compared = 0;
    let mut j = 0;
    for (i, &t) in su.times.iter().enumerate() {
        if t > window_end {
            break;
        }
        while j < sv.times.len() && sv.times[j] < t - 1e-12 {
            j += 1;
        }
        if j < sv.times.len() && (sv.times[j] - t).abs() <= 1e-12 {
            let (u, v) = (&su.fields[i], &sv.fields[j]);
            worst = worst.max(u.iter().zip(v).fold(0.0, |m, (a, b)| m.max(a - b)));
            vsup = vsup.max(sup(v));
            compared += 1;
        }
    }
    Ok(ComparisonReport { max_violation: worst, tolerance: 1e-6 * vsup, nodes_compared: compared, window_end })
}

/// One-sided residual of the scaled supersolution φ = M^{(p−p′)/(p′−1)}·v
/// for exponent p′ > p, where v is a stored global solution with sup M:
/// returns max over nodes of (Φ_{p′}(φ) − φ)₊ / ‖φ‖_∞ (≤ 0 up to round-off).
pub fn supersolution_residual(prop: &Propagator, v: &SolutionState, p_prime: f64) -> Result<f64> {
    let p = v.p.ok_or_else(|| FracError::Parameter("supersolution check needs a semilinear state".into()))?;
    if !(p_prime > p) {
        return Err(FracError::Parameter(format!("need p′ > p, got {p_prime} ≤ {p}")));
    }
    if v.fields.len() != v.times.len() || v.uniform_nodes != v.times.len() || v.times.len() != prop.pair.mesh.cells + 1 {
        return Err(FracError::Mesh("supersolution check needs all fields of a full uniform run".into()));
    }
    let m = v.sup_norm();
    let c = m.powf((p - p_prime) / (p_prime - 1.0));
    let phi: Vec<Vec<f64>> = v.fields.iter().map(|u| u.iter().map(|x| c * x).collect()).collect();
    let forcing: Vec<Vec<f64>> = phi.iter().map(|u| positive_power(u, p_prime).0).collect();
    let phi0 = SpatialField::new(v.lattice, phi[0].clone(), 0.0)?;
    let image = prop.solve_linear(&phi0, &forcing, true)?;
    let scale = phi.iter().map(|u| sup(u)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok(image.fields.iter().zip(&phi).fold(f64::NEG_INFINITY, |m, (a, b)| a.iter().zip(b).fold(m, |m, (x, y)| m.max(x - y))) / scale)
}

/// Temporal factor φ₂(t) = (1 − t/T)^k of a separable test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalTest {
    pub power: u32,
}

impl TemporalTest {
    pub fn value(&self, t: f64, horizon: f64) -> f64 {
        (1.0 - t / horizon).powi(self.power as i32)
    }

    /// Backwards derivative (w′⋆κ)(T − t) for w(s) = (s/T)^k, using
    /// w′⋆κ(τ) = ∫₀^τ w″(s)·H_κ(τ − s)ds + w′(0)H_κ(τ) with H_κ = ∫κ.
    pub fn backward_derivative(&self, pair: &PairTable, t: f64, horizon: f64) -> f64 {
        let k = self.power as f64;
        let tau = horizon - t;
        if tau <= 0.0 {
            return 0.0;
        }
        if let Some(a) = pair.kernel_time.caputo_alpha() {
            return crate::special::gamma::gamma(k + 1.0) / crate::special::gamma::gamma(k + 1.0 - a) * tau.powf(k - a) / horizon.powf(k);
        }
        let w2 = |s: f64| k * (k - 1.0) * s.powf(k - 2.0) / horizon.powf(k);
        let kt = &pair.kernel_time;
        crate::quad::integrate(|s| w2(s) * kt.h_kappa(tau - s), 0.0, tau, crate::quad::QuadOpts::rel(1e-12)).value
    }
}

/// Terms of the very weak identity ∫(u−u₀)𝒟ζ + ∫uℒζ = ∫fζ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual {
    pub memory_term: f64,
    pub diffusion_term: f64,
    pub source_term: f64,
    /// |LHS − RHS| over the largest term.
    pub normalized: f64,
}

/// Very weak residual of a stored state against ζ = φ₁(x)φ₂(t) on [0, T]
/// (T a node). ℒφ₁ is computed through the symbol; time integrals use the
/// trapezoid rule on the nodes.
pub fn weak_residual(state: &SolutionState, pair: &PairTable, phi1: &[f64], temporal: TemporalTest, horizon: f64) -> Result<WeakResidual> {
    if temporal.power < 2 {
        return Err(FracError::Unsupported("temporal test factor needs power ≥ 2".into()));
    }
    if state.fields.len() != state.times.len() {
        return Err(FracError::Unsupported("weak residual needs stored fields".into()));
    }
    let lat = state.lattice;
    if lat != pair.grid.lattice || phi1.len() != lat.len() {
        return Err(FracError::Mesh("test function and state must share the pair's lattice".into()));
    }
    let last = state.times.iter().position(|&t| (t - horizon).abs() <= 1e-12 * horizon.max(1.0)).ok_or_else(|| FracError::Mesh(format!("T = {horizon} is not a node of the state")))?;
    let tr = Transform::new(lat);
    let half = tr.half_positions();
    let phi_hat = tr.forward(phi1);
    let m: Vec<f64> = (0..lat.len()).map(|i| pair.grid.values[pair.grid.index[i] as usize]).collect();
    let lphi = tr.inverse(&phi_hat.iter().zip(&m).map(|(v, m)| v * m).collect::<Vec<_>>());
    let dv = lat.cell_volume();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dv;
    let u0 = &state.fields[0];
    let (mut mem, mut dif, mut src) = (0.0, 0.0, 0.0);
    for n in 0..=last {
        let t = state.times[n];
        let w = if n == 0 {
            0.5 * (state.times[1] - t)
        } else if n == last {
            0.5 * (t - state.times[n - 1])
        } else {
            0.5 * (state.times[n + 1] - state.times[n - 1])
        };
        let u = &state.fields[n];
        let du: Vec<f64> = u.iter().zip(u0).map(|(a, b)| a - b).collect();
        let f = tr.inverse_half(&state.nonlinear_hat[n], &half);
        mem += w * temporal.backward_derivative(pair, t, horizon) * dot(&du, phi1);
        dif += w * temporal.value(t, horizon) * dot(u, &lphi);
        src += w * temporal.value(t, horizon) * dot(&f, phi1);
    }
    let scale = mem.abs().max(dif.abs()).max(src.abs());
    let normalized = if scale == 0.0 { 0.0 } else { (mem + dif - src).abs() / scale };
    Ok(WeakResidual { memory_term: mem, diffusion_term: dif, source_term: src, normalized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyKernel;
    use crate::pair::{build_pair, Mesh};
    use crate::spectral::symbol_grid;
    use crate::time_kernels::{caputo_h_ell, make_caputo};

    fn setup(n: usize, l: f64, dt: f64, cells: usize) -> PairTable {
        let kt = make_caputo(0.5).unwrap();
        let ks = LevyKernel::stable(1, 1.0).unwrap();
        let lat = Lattice::new(1, l, n).unwrap();
        let sg = symbol_grid(&ks, lat).unwrap();
        build_pair(&kt, &ks, &sg, Mesh::new(dt, cells).unwrap()).unwrap()
    }

    fn bump(lat: Lattice, amp: f64, width: f64) -> SpatialField {
        let v = (0..lat.len()).map(|i| amp * (-(lat.radius(i) / width).powi(2)).exp()).collect();
        SpatialField::new(lat, v, 0.0).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let pair = setup(64, 16.0, 0.05, 40);
        let u0 = SpatialField::new(pair.grid.lattice, vec![0.0; 64], 0.0).unwrap();
        let st = solve(&u0, 2.0, &pair, &StepPolicy::default()).unwrap();
        assert_eq!(st.status, Status::Global);
        assert!(st.fields.iter().all(|u| u.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unit_forcing_zero_mode_is_h_ell() {
        let pair = setup(32, 8.0, 0.02, 100);
        let lat = pair.grid.lattice;
        let u0 = SpatialField::new(lat, vec![0.0; 32], 0.0).unwrap();
        let st = solve_linear(&u0, &[vec![1.0; 32]], &pair).unwrap();
        for (t, u) in st.times.iter().zip(&st.fields) {
            let want = caputo_h_ell(0.5, *t);
            assert!(u.iter().all(|v| (v - want).abs() < 1e-12 * want.max(1.0)), "t = {t}");
        }
    }

    #[test]
    fn free_evolution_contracts_norms_and_keeps_mass() {
        let pair = setup(256, 32.0, 0.05, 200);
        let u0 = bump(pair.grid.lattice, 1.0, 1.0);
        let st = solve_linear(&u0, &[vec![0.0; 256]], &pair).unwrap();
        let n0 = st.norms[0];
        for nn in &st.norms {
            assert!(nn.norminf <= n0.norminf * (1.0 + 1e-9));
            assert!(nn.norm2 <= n0.norm2 * (1.0 + 1e-9));
        }
        let mass = |u: &[f64]| u.iter().sum::<f64>();
        let m0 = mass(&st.fields[0]);
        assert!(st.fields.iter().all(|u| ((mass(u) - m0) / m0).abs() < 1e-12));
    }

    #[test]
    fn history_reassembles_to_round_off() {
        let pair = setup(64, 16.0, 0.05, 80);
        let prop = Propagator::new(&pair).unwrap();
        let u0 = bump(pair.grid.lattice, 0.5, 1.0);
        let st = prop.solve(&u0, 2.0, &StepPolicy::default()).unwrap();
        assert_eq!(st.status, Status::Global);
        for n in [1, 17, 33, 80] {
            let u = prop.reassemble(&st, n).unwrap();
            let e = u.iter().zip(&st.fields[n]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(e < 1e-13, "node {n}: {e}");
        }
    }

    #[test]
    fn large_constant_data_blows_up() {
        let pair = setup(16, 4.0, 1e-3, 200);
        let u0 = SpatialField::new(pair.grid.lattice, vec![10.0; 16], 0.0).unwrap();
        let st = solve(&u0, 2.0, &pair, &StepPolicy::default()).unwrap();
        assert!(st.status.blown_up(), "{:?}", st.status);
        let u = st.last_field();
        assert!(u.iter().all(|v| (v - u[0]).abs() <= 1e-9 * u[0]));
    }

    #[test]
    fn comparison_of_ordered_data() {
        let pair = setup(128, 16.0, 0.02, 100);
        let prop = Propagator::new(&pair).unwrap();
        let u0 = bump(pair.grid.lattice, 0.3, 1.0);
        let v0 = bump(pair.grid.lattice, 0.6, 1.0);
        let r = comparison_check(&prop, &u0, &v0, 2.0, &StepPolicy::default()).unwrap();
        assert!(r.passed() && r.nodes_compared > 10, "{r:?}");
    }

    #[test]
    fn weak_residual_of_free_evolution_is_small() {
        let pair = setup(256, 32.0, 0.01, 200);
        let u0 = bump(pair.grid.lattice, 1.0, 1.0);
        let st = solve_linear(&u0, &[vec![0.0; 256]], &pair).unwrap();
        let phi = bump(pair.grid.lattice, 1.0, 2.0).values;
        let r = weak_residual(&st, &pair, &phi, TemporalTest { power: 2 }, 2.0).unwrap();
        assert!(r.normalized < 1e-3, "{r:?}");
    }

    #[test]
    fn scaled_solution_is_a_supersolution() {
        let pair = setup(128, 32.0, 0.05, 100);
        let prop = Propagator::new(&pair).unwrap();
        let u0 = bump(pair.grid.lattice, 0.3, 1.0);
        let v = prop.solve(&u0, 3.0, &StepPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Global);
        let r = supersolution_residual(&prop, &v, 4.0).unwrap();
        assert!(r <= 1e-9, "{r}");
    }
}
