//! Experiment configuration: a flat, line-based `key = value` format with
//! dotted section prefixes.
//!
//! Grammar: one entry per line; `#` starts a comment; blank lines are
//! ignored; keys are `[a-z0-9_.]+`; lists are comma-separated; booleans are
//! `true`/`false`. Unknown or repeated keys are errors. Every range is
//! validated before any computation, and [`ExperimentConfig::to_text`] echoes
//! the resolved configuration (defaults included) in a fixed key order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{FracError, Result};
use crate::levy::LevyKernel;
use crate::pair::Mesh;
use crate::spectral::{Lattice, SpatialField};
use crate::time_kernels::{make_caputo, make_classical, TimeKernel};

/// Memory kernel selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpec {
    /// `caputo`, `classical`, or a catalog name.
    pub kind: String,
    pub alpha: f64,
}

/// Jump kernel selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    /// Catalog name (`stable`, `truncated`, `tempered`, `gaussian`, `mixed`, `box`).
    pub kind: String,
    pub dim: usize,
    pub beta: f64,
    pub omega: Option<f64>,
}

/// Initial-datum family: Gaussian bumps amp·exp(−|x − c|²/w²).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub exponents: Vec<f64>,
    pub width: f64,
    pub center: f64,
    pub amplitudes: Vec<f64>,
}

/// Resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub time: TimeSpec,
    pub space: SpaceSpec,
    /// Half-width L and points per axis n.
    pub half_width: f64,
    pub n: usize,
    pub t_max: f64,
    pub cells: usize,
    pub refine: bool,
    pub u_max: f64,
    pub dt_min: f64,
    pub problem: ProblemSpec,
    /// L^q exponent of the θ-weighted norm (None: picked inside the window).
    pub theta_q: Option<f64>,
    /// Kaplan constant and horizon (None: certificate not evaluated).
    pub kaplan_c: Option<f64>,
    pub kaplan_t0: Option<f64>,
    /// Scales A and lattice size of the test-function check.
    pub testfn_scales: Vec<f64>,
    pub testfn_n: usize,
    pub checks: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "time.kind",
    "time.alpha",
    "space.kind",
    "space.dim",
    "space.beta",
    "space.omega",
    "grid.half_width",
    "grid.n",
    "mesh.t_max",
    "mesh.cells",
    "mesh.refine",
    "solver.u_max",
    "solver.dt_min",
    "problem.p",
    "problem.width",
    "problem.center",
    "problem.amplitudes",
    "theta.q",
    "kaplan.c",
    "kaplan.t0",
    "testfn.scales",
    "testfn.n",
    "checks",
    "output.dir",
    "seed",
];

const CHECKS: &[&str] = &["pair", "testfn", "kaplan", "sweep"];

impl Default for ExperimentConfig {
    /// The one-dimensional Fujita sweep: stable β = 1, Caputo α = 0.5.
    fn default() -> Self {
        ExperimentConfig {
            time: TimeSpec { kind: "caputo".into(), alpha: 0.5 },
            space: SpaceSpec { kind: "stable".into(), dim: 1, beta: 1.0, omega: None },
            half_width: 1024.0,
            n: 1024,
            t_max: 1000.0,
            cells: 16384,
            refine: true,
            u_max: 1e8,
            dt_min: 1e-10,
            problem: ProblemSpec { exponents: vec![1.5, 3.0, 1.05], width: 200.0, center: 0.0, amplitudes: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0] },
            theta_q: None,
            kaplan_c: None,
            kaplan_t0: None,
            testfn_scales: vec![4.0, 8.0, 16.0, 32.0],
            testfn_n: 4096,
            checks: vec!["pair".into(), "testfn".into(), "sweep".into()],
            output_dir: PathBuf::from("fracpair-out"),
            seed: 1,
        }
    }
}

fn cfg<T>(msg: impl Into<String>) -> Result<T> {
    Err(FracError::Config(msg.into()))
}

fn num(key: &str, v: &str) -> Result<f64> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => cfg(format!("{key}: '{v}' is not a finite number")),
    }
}

fn int(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().or_else(|_| cfg(format!("{key}: '{v}' is not a nonnegative integer")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| num(key, s)).collect()
}

fn opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" || v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(v: Option<f64>, none: &str) -> String {
    v.map_or(none.to_string(), |x| format!("{x:?}"))
}

/// Split text into key/value pairs, rejecting malformed lines and repeats.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return cfg(format!("line {}: expected 'key = value'", i + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.') {
            return cfg(format!("line {}: invalid key '{k}'", i + 1));
        }
        if v.is_empty() {
            return cfg(format!("line {}: empty value for '{k}'", i + 1));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return cfg(format!("line {}: duplicate key '{k}'", i + 1));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parse and validate; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (k, v) in parse_pairs(text)? {
            let v = v.as_str();
            match k.as_str() {
                "time.kind" => c.time.kind = v.to_string(),
                "time.alpha" => c.time.alpha = num(&k, v)?,
                "space.kind" => c.space.kind = v.to_string(),
                "space.dim" => c.space.dim = int(&k, v)?,
                "space.beta" => c.space.beta = num(&k, v)?,
                "space.omega" => c.space.omega = opt(&k, v)?,
                "grid.half_width" => c.half_width = num(&k, v)?,
                "grid.n" => c.n = int(&k, v)?,
                "mesh.t_max" => c.t_max = num(&k, v)?,
                "mesh.cells" => c.cells = int(&k, v)?,
                "mesh.refine" => {
                    c.refine = v.parse().or_else(|_| cfg(format!("{k}: '{v}' is not a boolean")))?;
                }
                "solver.u_max" => c.u_max = num(&k, v)?,
                "solver.dt_min" => c.dt_min = num(&k, v)?,
                "problem.p" => c.problem.exponents = list(&k, v)?,
                "problem.width" => c.problem.width = num(&k, v)?,
                "problem.center" => c.problem.center = num(&k, v)?,
                "problem.amplitudes" => c.problem.amplitudes = list(&k, v)?,
                "theta.q" => c.theta_q = opt(&k, v)?,
                "kaplan.c" => c.kaplan_c = opt(&k, v)?,
                "kaplan.t0" => c.kaplan_t0 = opt(&k, v)?,
                "testfn.scales" => c.testfn_scales = list(&k, v)?,
                "testfn.n" => c.testfn_n = int(&k, v)?,
                "checks" => c.checks = v.split(',').map(|s| s.trim().to_string()).collect(),
                "output.dir" => c.output_dir = PathBuf::from(v),
                "seed" => c.seed = v.parse().or_else(|_| cfg(format!("seed: '{v}' is not an integer")))?,
                _ => return cfg(format!("unknown key '{k}' (known: {})", KEYS.join(", "))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Range checks; called by `parse` and before every run.
    pub fn validate(&self) -> Result<()> {
        let a = self.time.alpha;
        if self.time.kind == "caputo" && !(a > 0.0 && a < 1.0) {
            return cfg(format!("time.alpha must lie in (0, 1), got {a}"));
        }
        if !matches!(self.space.dim, 1 | 2) {
            return cfg(format!("space.dim must be 1 or 2, got {}", self.space.dim));
        }
        if !(self.space.beta > 0.0 && self.space.beta < 2.0) {
            return cfg(format!("space.beta must lie in (0, 2), got {}", self.space.beta));
        }
        if !(self.half_width > 0.0) || self.n < 8 || !self.n.is_power_of_two() {
            return cfg(format!("grid needs L > 0 and n a power of two ≥ 8 (L = {}, n = {})", self.half_width, self.n));
        }
        if !(self.t_max > 0.0) || self.cells == 0 {
            return cfg("mesh needs t_max > 0 and cells ≥ 1");
        }
        if !(self.u_max > 0.0) || !(self.dt_min > 0.0) {
            return cfg("solver.u_max and solver.dt_min must be positive");
        }
        if self.problem.exponents.is_empty() || self.problem.exponents.iter().any(|&p| !(p > 1.0)) {
            return cfg("problem.p needs exponents > 1");
        }
        if self.problem.amplitudes.is_empty() || self.problem.amplitudes.iter().any(|&x| !(x > 0.0)) {
            return cfg("problem.amplitudes must be positive");
        }
        if !(self.problem.width > 0.0) {
            return cfg("problem.width must be positive");
        }
        if self.theta_q.is_some_and(|q| !(q > 1.0)) {
            return cfg("theta.q must exceed 1");
        }
        if self.kaplan_c.is_some_and(|c| !(c > 0.0)) || self.kaplan_t0.is_some_and(|t| !(t > 0.0)) {
            return cfg("kaplan.c and kaplan.t0 must be positive");
        }
        if self.testfn_scales.iter().any(|&s| !(s > 2.0)) || !self.testfn_n.is_power_of_two() {
            return cfg("testfn.scales must exceed 2 and testfn.n must be a power of two");
        }
        if let Some(bad) = self.checks.iter().find(|c| !CHECKS.contains(&c.as_str())) {
            return cfg(format!("unknown check '{bad}' (known: {})", CHECKS.join(", ")));
        }
        Ok(())
    }

    /// Whether a named check is enabled.
    pub fn wants(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }

    /// Amplitude range in decades.
    pub fn amplitude_decades(&self) -> f64 {
        let hi = self.problem.amplitudes.iter().cloned().fold(0.0, f64::max);
        let lo = self.problem.amplitudes.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi / lo).log10()
    }

    pub fn time_kernel(&self) -> Result<TimeKernel> {
        match self.time.kind.as_str() {
            "caputo" => make_caputo(self.time.alpha),
            "classical" => Ok(make_classical()),
            other => TimeKernel::from_catalog(other),
        }
    }

    pub fn space_kernel(&self) -> Result<LevyKernel> {
        LevyKernel::from_catalog(&self.space.kind, self.space.dim, self.space.beta, self.space.omega)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.space.dim, self.half_width, self.n)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.t_max / self.cells as f64, self.cells)
    }

    /// Gaussian datum of the configured family.
    pub fn datum(&self, lat: Lattice, amp: f64) -> Result<SpatialField> {
        let (c, w) = (self.problem.center, self.problem.width);
        let values = (0..lat.len())
            .map(|i| {
                let [a, b] = lat.axes(i);
                let mut r2 = (lat.coord(a) - c).powi(2);
                if lat.dim == 2 {
                    r2 += lat.coord(b).powi(2);
                }
                amp * (-r2 / (w * w)).exp()
            })
            .collect();
        SpatialField::new(lat, values, 0.0)
    }

    /// Resolved configuration in the input grammar, fixed key order.
    pub fn to_text(&self) -> String {
        let rows: Vec<(&str, String)> = vec![
            ("time.kind", self.time.kind.clone()),
            ("time.alpha", format!("{:?}", self.time.alpha)),
            ("space.kind", self.space.kind.clone()),
            ("space.dim", self.space.dim.to_string()),
            ("space.beta", format!("{:?}", self.space.beta)),
            ("space.omega", fmt_opt(self.space.omega, "none")),
            ("grid.half_width", format!("{:?}", self.half_width)),
            ("grid.n", self.n.to_string()),
            ("mesh.t_max", format!("{:?}", self.t_max)),
            ("mesh.cells", self.cells.to_string()),
            ("mesh.refine", self.refine.to_string()),
            ("solver.u_max", format!("{:?}", self.u_max)),
            ("solver.dt_min", format!("{:?}", self.dt_min)),
            ("problem.p", fmt_list(&self.problem.exponents)),
            ("problem.width", format!("{:?}", self.problem.width)),
            ("problem.center", format!("{:?}", self.problem.center)),
            ("problem.amplitudes", fmt_list(&self.problem.amplitudes)),
            ("theta.q", fmt_opt(self.theta_q, "auto")),
            ("kaplan.c", fmt_opt(self.kaplan_c, "none")),
            ("kaplan.t0", fmt_opt(self.kaplan_t0, "none")),
            ("testfn.scales", fmt_list(&self.testfn_scales)),
            ("testfn.n", self.testfn_n.to_string()),
            ("checks", self.checks.join(", ")),
            ("output.dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let c = ExperimentConfig::parse("# sweep\ntime.alpha = 0.3\nproblem.p = 1.5, 2\nkaplan.c = 8.5 # calibrated\n").unwrap();
        assert_eq!(c.time.alpha, 0.3);
        assert_eq!(c.problem.exponents, vec![1.5, 2.0]);
        assert_eq!(c.kaplan_c, Some(8.5));
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["time.alpha = 1.5", "nonsense = 1", "grid.n = 1000", "problem.p = 1.0", "time.alpha 0.5", "seed = 1\nseed = 2", "checks = plot"] {
            let e = ExperimentConfig::parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }
}
