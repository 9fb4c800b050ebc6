//! Report bundle: pair diagnostics, criteria checks and the sweep table as
//! CSV (17 significant digits, header row first), the echoed configuration
//! and a manifest with versions and stage timings.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::criteria::{fujita_exponent, verify_testfn_bound};
use crate::error::{FracError, Result};
use crate::pair::{subordination_check, y_relation_check};
use crate::sweep::{config_pair, fujita_sweep, SweepTable, SWEEP_HEADER};

/// Float with 17 significant digits (round-trips every f64).
pub fn g17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// CSV writer that flushes after every row.
pub struct CsvTable<W: Write> {
    inner: csv::Writer<W>,
}

fn io(e: csv::Error) -> FracError {
    FracError::Io(e.to_string())
}

impl<W: Write> CsvTable<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(header).map_err(io)?;
        inner.flush()?;
        Ok(CsvTable { inner })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.inner.write_record(fields).map_err(io)?;
        self.inner.flush()?;
        Ok(())
    }
}

impl CsvTable<File> {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        CsvTable::new(File::create(path)?, header)
    }
}

/// Files and stage timings of one report run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub timings: Vec<(String, f64)>,
    pub sweep: Option<SweepTable>,
}

fn metric(t: &mut CsvTable<File>, check: &str, key: &str, value: f64, passed: Option<bool>) -> Result<()> {
    let passed = passed.map_or(String::new(), |b| b.to_string());
    t.row(&[check.to_string(), key.to_string(), g17(value), passed])
}

fn pair_report(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let pair = config_pair(config)?;
    let mut t = CsvTable::create(path, &["check", "key", "value", "passed"])?;
    let inv = pair.check_invariants();
    let ok = Some(inv.passed());
    metric(&mut t, "invariants", "zero_mode_z", inv.zero_mode_z, ok)?;
    metric(&mut t, "invariants", "zero_mode_y", inv.zero_mode_y, ok)?;
    metric(&mut t, "invariants", "range_violations", inv.range_violations as f64, ok)?;
    metric(&mut t, "invariants", "bound_violations", inv.bound_violations as f64, ok)?;
    if config.time_kernel()?.caputo_alpha().is_some() {
        let m = pair.mesh.cells;
        let radii: Vec<usize> = [0, 1, pair.grid.values.len() / 8, pair.grid.values.len() / 2].into_iter().filter(|&r| r < pair.grid.values.len()).collect();
        let cells: Vec<usize> = [0, m / 4, m / 2, m - 1].into_iter().collect();
        metric(&mut t, "y_relation", "max_rel_error", y_relation_check(&pair, &radii, &cells)?, None)?;
        for n in [m / 4, m / 2, m].into_iter().filter(|&n| n > 0) {
            let s = subordination_check(&pair, n)?;
            let key = |k: &str| format!("{k}@t={}", g17(s.t));
            metric(&mut t, "subordination", &key("z_l1"), s.z_l1, None)?;
            metric(&mut t, "subordination", &key("z_linf"), s.z_linf, None)?;
            metric(&mut t, "subordination", &key("y_l1"), s.y_l1, None)?;
            metric(&mut t, "subordination", &key("y_linf"), s.y_linf, None)?;
        }
    }
    Ok(())
}

fn criteria_report(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let space = config.space_kernel()?;
    let mut t = CsvTable::create(path, &["check", "key", "value", "passed"])?;
    if let Some(g) = space.gamma_tail {
        metric(&mut t, "fujita", "p_star", fujita_exponent(space.dim, g)?, None)?;
    }
    if config.wants("testfn") {
        let r = verify_testfn_bound(&space, &config.testfn_scales, config.testfn_n)?;
        let ok = Some(r.passed());
        metric(&mut t, "testfn", "gamma_eff", r.gamma_eff, ok)?;
        for s in &r.samples {
            metric(&mut t, "testfn", &format!("ratio@A={}", s.scale), s.ratio, ok)?;
            metric(&mut t, "testfn", &format!("interior_min@A={}", s.scale), s.interior_min, ok)?;
        }
        metric(&mut t, "testfn", "spread", r.spread(), Some(r.spread() <= 2.0))?;
    }
    if config.wants("kaplan") {
        if let Some(c) = config.kaplan_c {
            metric(&mut t, "kaplan", "c_cal", c, None)?;
            metric(&mut t, "kaplan", "t0", config.kaplan_t0.unwrap_or(config.t_max), None)?;
        }
    }
    Ok(())
}

/// Run every enabled check of `config` into its output directory.
pub fn run_reports(config: &ExperimentConfig) -> Result<ReportSummary> {
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.txt"), config.to_text())?;
    let mut files = vec!["config.txt".to_string()];
    let mut timings = Vec::new();
    let mut sweep = None;
    let stage = |name: &str, f: &mut dyn FnMut() -> Result<()>, timings: &mut Vec<(String, f64)>| -> Result<()> {
        let t = Instant::now();
        f()?;
        timings.push((name.to_string(), t.elapsed().as_secs_f64()));
        Ok(())
    };
    if config.wants("pair") {
        stage("pair", &mut || pair_report(config, &dir.join("pair_report.csv")), &mut timings)?;
        files.push("pair_report.csv".into());
    }
    stage("criteria", &mut || criteria_report(config, &dir.join("criteria.csv")), &mut timings)?;
    files.push("criteria.csv".into());
    if config.wants("sweep") {
        stage(
            "sweep",
            &mut || {
                let mut out = CsvTable::create(&dir.join("sweep.csv"), SWEEP_HEADER)?;
                let table = fujita_sweep(config, &mut out)?;
                let mut v = CsvTable::create(&dir.join("sweep_verdicts.csv"), &["p", "verdict", "observation"])?;
                for (p, verdict) in &table.verdicts {
                    v.row(&[g17(*p), verdict.label().to_string(), verdict.describe().to_string()])?;
                }
                sweep = Some(table);
                Ok(())
            },
            &mut timings,
        )?;
        files.push("sweep.csv".into());
        files.push("sweep_verdicts.csv".into());
    }
    let mut manifest = format!("fracpair {}\nthreads = {}\nseed = {}\n", env!("CARGO_PKG_VERSION"), rayon::current_num_threads(), config.seed);
    for f in &files {
        manifest.push_str(&format!("file = {f}\n"));
    }
    for (name, secs) in &timings {
        manifest.push_str(&format!("time.{name} = {secs:.3}\n"));
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    files.push("manifest.txt".into());
    Ok(ReportSummary { dir, files, timings, sweep })
}
