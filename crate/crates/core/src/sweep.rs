//! Fujita phase-diagram sweep over (p, amplitude): one mild solve per cell,
//! the θ-weighted norm against the free evolution, the Kaplan verdict, and a
//! per-p summary phrased as an observation about the tested amplitudes.

use std::io::Write;

use crate::config::ExperimentConfig;
use crate::criteria::{free_theta_series, kaplan_certificate, pick_theta_q, theta_exponent, theta_q_window, KaplanVerdict, ThetaSeries};
use crate::error::{FracError, Result};
use crate::pair::{build_pair, PairTable};
use crate::report::{g17, CsvTable};
use crate::solver::{Propagator, Status, StepPolicy};
use crate::spectral::symbol_grid;

/// A Global run counts as bounded in the θ-norm when its sup stays within
/// this factor of the free evolution's sup.
pub const THETA_BOUND_FACTOR: f64 = 2.0;

/// One (p, amplitude) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub amplitude: f64,
    pub status: Status,
    /// t_b for blow-up, the final time otherwise.
    pub t_end: f64,
    pub final_norm_inf: f64,
    /// θ-norm exponent q and weight θ (NaN when the window is empty or the
    /// memory kernel has no order α).
    pub theta_q: f64,
    pub theta: f64,
    pub theta_sup: f64,
    pub free_theta_sup: f64,
    pub kaplan: Option<KaplanVerdict>,
}

impl SweepRow {
    /// θ-norm bounded by THETA_BOUND_FACTOR × the free evolution's.
    pub fn theta_bounded(&self) -> bool {
        self.theta_sup <= THETA_BOUND_FACTOR * self.free_theta_sup
    }
}

/// Observed behaviour of all tested amplitudes at one p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVerdict {
    AllTestedBlowUp,
    Dichotomy,
    AllTestedGlobal,
    /// Some run failed numerically.
    Inconclusive,
}

impl SweepVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SweepVerdict::AllTestedBlowUp => "all-tested-blow-up",
            SweepVerdict::Dichotomy => "dichotomy",
            SweepVerdict::AllTestedGlobal => "all-tested-global",
            SweepVerdict::Inconclusive => "inconclusive",
        }
    }

    /// Observation sentence for reports.
    pub fn describe(&self) -> &'static str {
        match self {
            SweepVerdict::AllTestedBlowUp => "all tested amplitudes blew up before T_max",
            SweepVerdict::Dichotomy => "small tested amplitudes stayed global, large ones blew up",
            SweepVerdict::AllTestedGlobal => "all tested amplitudes reached T_max",
            SweepVerdict::Inconclusive => "at least one run failed numerically",
        }
    }

    pub fn of(rows: &[&SweepRow]) -> Self {
        if rows.iter().any(|r| matches!(r.status, Status::Failed(_) | Status::Running)) {
            SweepVerdict::Inconclusive
        } else if rows.iter().all(|r| r.status.blown_up()) {
            SweepVerdict::AllTestedBlowUp
        } else if rows.iter().all(|r| !r.status.blown_up()) {
            SweepVerdict::AllTestedGlobal
        } else {
            SweepVerdict::Dichotomy
        }
    }
}

/// Rows in (p, amplitude) order with a verdict per p.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<(f64, SweepVerdict)>,
}

impl SweepTable {
    pub fn rows_for(&self, p: f64) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.p == p).collect()
    }

    pub fn verdict(&self, p: f64) -> Option<SweepVerdict> {
        self.verdicts.iter().find(|v| v.0 == p).map(|v| v.1)
    }
}

pub const SWEEP_HEADER: &[&str] = &[
    "p",
    "amplitude",
    "status",
    "t_end",
    "final_norm_inf",
    "theta_q",
    "theta",
    "theta_sup",
    "free_theta_sup",
    "theta_bounded",
    "kaplan",
];

fn row_fields(r: &SweepRow) -> Vec<String> {
    vec![
        g17(r.p),
        g17(r.amplitude),
        r.status.label().to_string(),
        g17(r.t_end),
        g17(r.final_norm_inf),
        g17(r.theta_q),
        g17(r.theta),
        g17(r.theta_sup),
        g17(r.free_theta_sup),
        r.theta_bounded().to_string(),
        match r.kaplan {
            None => "not-evaluated",
            Some(KaplanVerdict::CertifiedBlowupBeforeT0) => "certified",
            Some(KaplanVerdict::Inconclusive) => "inconclusive",
        }
        .to_string(),
    ]
}

/// Build the configured pair.
pub fn config_pair(config: &ExperimentConfig) -> Result<PairTable> {
    let space = config.space_kernel()?;
    let grid = symbol_grid(&space, config.lattice()?)?;
    build_pair(&config.time_kernel()?, &space, &grid, config.mesh()?)
}

/// Run the sweep, writing each row to `out` as soon as it is known (a
/// failing cell leaves the completed rows flushed).
pub fn fujita_sweep<W: Write>(config: &ExperimentConfig, out: &mut CsvTable<W>) -> Result<SweepTable> {
    config.validate()?;
    if config.amplitude_decades() < 3.0 - 1e-9 {
        return Err(FracError::Config(format!("sweep amplitudes must span ≥ 3 decades (got {:.2})", config.amplitude_decades())));
    }
    let space = config.space_kernel()?;
    let pair = config_pair(config)?;
    let prop = Propagator::new(&pair)?;
    let lat = pair.grid.lattice;
    let alpha = config.time_kernel()?.caputo_alpha();
    let (beta, varpi) = (space.beta.unwrap_or(2.0).min(2.0), space.varpi().unwrap_or(2.0));
    let gamma_bar = space.gamma_bar();
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &p in &config.problem.exponents {
        let q_theta = alpha.and_then(|a| {
            let window = theta_q_window(space.dim, beta, varpi, a, p).ok()?;
            let q = config.theta_q.unwrap_or_else(|| pick_theta_q(window));
            (q > window.0 && q < window.1).then(|| (q, theta_exponent(space.dim, a, varpi, q)))
        });
        for &amp in &config.problem.amplitudes {
            let u0 = config.datum(lat, amp)?;
            let policy = StepPolicy {
                t_max: config.t_max,
                u_max: config.u_max,
                dt_min: config.dt_min,
                refine: config.refine,
                store_fields: false,
                norm_q: q_theta.map(|x| x.0),
                ..Default::default()
            };
            let st = prop.solve(&u0, p, &policy)?;
            let (theta_sup, free_sup) = match q_theta {
                Some((q, theta)) => {
                    let norms: Vec<f64> = st.norms.iter().map(|n| n.norm_q).collect();
                    let own = ThetaSeries::from_norms(q, theta, st.times.clone(), &norms);
                    let last = ((st.t_end() / pair.mesh.dt) + 1e-9).floor() as usize;
                    let nodes: Vec<usize> = (0..=last.min(pair.mesh.cells)).collect();
                    (own.sup(), free_theta_series(&pair, &u0, q, theta, &nodes)?.sup())
                }
                None => (f64::NAN, f64::NAN),
            };
            let kaplan = match (config.kaplan_c, alpha, gamma_bar) {
                (Some(c), Some(a), Some(g)) => Some(kaplan_certificate(&u0, config.kaplan_t0.unwrap_or(config.t_max), a, g, p, c)),
                _ => None,
            };
            let row = SweepRow {
                p,
                amplitude: amp,
                t_end: st.t_end(),
                final_norm_inf: st.norms.last().map_or(f64::NAN, |n| n.norminf),
                status: st.status,
                theta_q: q_theta.map_or(f64::NAN, |x| x.0),
                theta: q_theta.map_or(f64::NAN, |x| x.1),
                theta_sup,
                free_theta_sup: free_sup,
                kaplan,
            };
            out.row(&row_fields(&row))?;
            rows.push(row);
        }
        let here: Vec<&SweepRow> = rows.iter().filter(|r| r.p == p).collect();
        verdicts.push((p, SweepVerdict::of(&here)));
    }
    Ok(SweepTable { rows, verdicts })
}
