//! `fracpair` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 admissibility error. `FRACPAIR_THREADS` caps the worker pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracpair::config::ExperimentConfig;
use fracpair::criteria::{ball_mass, calibrate_kaplan, fujita_exponent, gaussian_bump, kaplan_certificate, kaplan_exponent, pick_theta_q, theta_exponent, theta_q_window, verify_testfn_bound, KaplanGrid, KaplanTraining, KaplanVerdict};
use fracpair::heat::heat_kernel_field;
use fracpair::levy::LevyKernel;
use fracpair::relaxation::CaputoProfile;
use fracpair::report::{g17, run_reports, CsvTable};
use fracpair::solver::{Propagator, StepPolicy};
use fracpair::special::{gamma, mainardi_phi, mittag_leffler};
use fracpair::spectral::{symbol_grid, Lattice};
use fracpair::sweep::{config_pair, fujita_sweep, SWEEP_HEADER};
use fracpair::{FracError, Result};

#[derive(Parser)]
#[command(name = "fracpair", version, about = "Fundamental pair and blow-up experiments for nonlocal heat equations with memory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Lévy kernel: stable, truncated, tempered, gaussian, mixed, box.
    #[arg(long, default_value = "stable")]
    kernel: String,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Tail exponent of the mixed kernel.
    #[arg(long)]
    omega: Option<f64>,
}

impl KernelArgs {
    fn build(&self) -> Result<LevyKernel> {
        LevyKernel::from_catalog(&self.kernel, self.dim, self.beta, self.omega)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Symbol m(ξ) at the given |ξ| values.
    Symbol {
        #[command(flatten)]
        k: KernelArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        xi: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heat kernel G_t norms on a lattice.
    Heat {
        #[command(flatten)]
        k: KernelArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 64.0)]
        half_width: f64,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Caputo relaxation functions ρ₁, ρ₂ at rate μ.
    Relax {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair diagnostics for a configuration.
    Pair {
        #[arg(long)]
        config: PathBuf,
    },
    /// One semilinear solve: norms.csv and status.txt.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Exponent (default: first of problem.p).
        #[arg(long)]
        p: Option<f64>,
        /// Amplitude (default: first of problem.amplitudes).
        #[arg(long)]
        amp: Option<f64>,
    },
    /// Blow-up criteria checks.
    Criteria {
        #[command(flatten)]
        k: KernelArgs,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        /// Comma list of testfn, kaplan.
        #[arg(long, value_delimiter = ',', default_value = "testfn")]
        check: Vec<String>,
        /// Calibrated Kaplan constant (calibrated on the fly when absent).
        #[arg(long)]
        c_cal: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        t0: f64,
        /// Gaussian datum (amplitude, width) to certify.
        #[arg(long, default_value_t = 20.0)]
        amp: f64,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value = "criteria.csv")]
        out: PathBuf,
    },
    /// Fujita sweep for a configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Special functions: ml (E_{a,b}(z)), mainardi (Φ_a(z)), gamma (Γ(z)).
    Special {
        #[arg(long)]
        func: String,
        #[arg(long, default_value_t = 0.5)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        z: Vec<f64>,
    },
    /// Every enabled check of a configuration into its output directory.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| FracError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

fn table(out: &Option<PathBuf>, header: &[&str]) -> Result<CsvTable<Box<dyn std::io::Write>>> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    CsvTable::new(sink, header)
}

fn prepare_dir(c: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&c.output_dir)?;
    std::fs::write(c.output_dir.join("config.txt"), c.to_text())?;
    Ok(())
}

fn solve_cmd(c: &ExperimentConfig, p: f64, amp: f64) -> Result<()> {
    prepare_dir(c)?;
    let pair = config_pair(c)?;
    let prop = Propagator::new(&pair)?;
    let space = c.space_kernel()?;
    let theta = c.time_kernel()?.caputo_alpha().and_then(|a| {
        let varpi = space.varpi()?;
        let w = theta_q_window(space.dim, space.beta.unwrap_or(2.0).min(2.0), varpi, a, p).ok()?;
        let q = c.theta_q.unwrap_or_else(|| pick_theta_q(w));
        Some((q, theta_exponent(space.dim, a, varpi, q)))
    });
    let policy = StepPolicy { t_max: c.t_max, u_max: c.u_max, dt_min: c.dt_min, refine: c.refine, store_fields: false, norm_q: theta.map(|x| x.0), ..Default::default() };
    let st = prop.solve(&c.datum(pair.grid.lattice, amp)?, p, &policy)?;
    let mut t = CsvTable::create(&c.output_dir.join("norms.csv"), &["t", "norm1", "norm2", "norminf", "theta_weighted"])?;
    for n in &st.norms {
        let tw = theta.map_or(f64::NAN, |(_, th)| (1.0 + n.t).powf(th) * n.norm_q);
        t.row(&[g17(n.t), g17(n.norm1), g17(n.norm2), g17(n.norminf), g17(tw)])?;
    }
    let status = match &st.status {
        fracpair::solver::Status::BlownUp { t_b, bracket, norm } => format!("blown_up t_b = {} bracket = [{}, {}] norm = {}\n", g17(*t_b), g17(bracket.0), g17(bracket.1), g17(*norm)),
        fracpair::solver::Status::Failed(why) => format!("failed {why}\n"),
        s => format!("{} t_end = {}\n", s.label(), g17(st.t_end())),
    };
    std::fs::write(c.output_dir.join("status.txt"), status)?;
    Ok(())
}

fn criteria_cmd(k: &KernelArgs, alpha: f64, p: f64, checks: &[String], c_cal: Option<f64>, t0: f64, datum: (f64, f64), out: &Path) -> Result<()> {
    let kernel = k.build()?;
    let gamma_bar = kernel.gamma_bar().ok_or_else(|| FracError::Parameter("kernel has no tail exponent γ".into()))?;
    let mut t = CsvTable::create(out, &["check", "key", "value", "passed"])?;
    t.row(&["fujita".to_string(), "p_star".into(), g17(fujita_exponent(kernel.dim, kernel.gamma_tail.unwrap_or(gamma_bar))?), String::new()])?;
    for check in checks {
        match check.as_str() {
            "testfn" => {
                let r = verify_testfn_bound(&kernel, &[4.0, 8.0, 16.0, 32.0], 4096)?;
                for s in &r.samples {
                    t.row(&["testfn".to_string(), format!("ratio@A={}", s.scale), g17(s.ratio), String::new()])?;
                }
                t.row(&["testfn".to_string(), "spread".into(), g17(r.spread()), r.passed().to_string()])?;
            }
            "kaplan" => {
                let grid = KaplanGrid { half_width: 32.0, n: 256, cells: 500 };
                let c = match c_cal {
                    Some(c) => c,
                    None => {
                        let family: Vec<KaplanTraining> = [0.3, 0.5, 0.8].iter().flat_map(|&a| [1.5, 2.5].map(|p| KaplanTraining { alpha: a, p, width: 1.0 })).collect();
                        let cal = calibrate_kaplan(&kernel, &family, t0, grid, 6)?;
                        for (case, th) in &cal.thresholds {
                            t.row(&["kaplan".to_string(), format!("threshold@alpha={},p={}", case.alpha, case.p), g17(*th), String::new()])?;
                        }
                        cal.c_cal
                    }
                };
                t.row(&["kaplan".to_string(), "c_cal".into(), g17(c), String::new()])?;
                let lat = Lattice::new(kernel.dim, grid.half_width, grid.n)?;
                let u0 = gaussian_bump(lat, datum.0, datum.1)?;
                let certified = kaplan_certificate(&u0, t0, alpha, gamma_bar, p, c) == KaplanVerdict::CertifiedBlowupBeforeT0;
                t.row(&["kaplan".to_string(), "ball_mass".into(), g17(ball_mass(&u0, t0, alpha, gamma_bar)), String::new()])?;
                t.row(&["kaplan".to_string(), "threshold".into(), g17(2.0 * c * t0.powf(kaplan_exponent(kernel.dim, alpha, gamma_bar, p))), String::new()])?;
                t.row(&["kaplan".to_string(), format!("certified_before_t0={}", g17(t0)), String::new(), certified.to_string()])?;
            }
            other => return Err(FracError::Config(format!("unknown check '{other}' (known: testfn, kaplan)"))),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Symbol { k, xi, out } => {
            let kernel = k.build()?;
            let mut t = table(&out, &["xi", "m"])?;
            for x in xi {
                t.row(&[g17(x), g17(kernel.symbol(x)?)])?;
            }
        }
        Cmd::Heat { k, t: times, half_width, n, out } => {
            let kernel = k.build()?;
            let grid = symbol_grid(&kernel, Lattice::new(k.dim, half_width, n)?)?;
            let mut t = table(&out, &["t", "norm1", "norm2", "norminf", "nyquist_tail"])?;
            for s in times {
                let g = heat_kernel_field(&grid, s)?;
                t.row(&[g17(s), g17(g.field.norm(1.0)), g17(g.field.norm(2.0)), g17(g.field.norm(f64::INFINITY)), g17(g.tail)])?;
            }
        }
        Cmd::Relax { alpha, mu, t: times, out } => {
            let prof = CaputoProfile::new(alpha)?;
            let mut t = table(&out, &["t", "rho1", "rho2"])?;
            for s in times {
                t.row(&[g17(s), g17(prof.rho1(mu, s)), g17(prof.rho2(mu, s))])?;
            }
        }
        Cmd::Pair { config } => {
            let mut c = load(&config)?;
            c.checks = vec!["pair".into()];
            run_reports(&c)?;
        }
        Cmd::Solve { config, p, amp } => {
            let c = load(&config)?;
            solve_cmd(&c, p.unwrap_or(c.problem.exponents[0]), amp.unwrap_or(c.problem.amplitudes[0]))?;
        }
        Cmd::Criteria { k, alpha, p, check, c_cal, t0, amp, width, out } => criteria_cmd(&k, alpha, p, &check, c_cal, t0, (amp, width), &out)?,
        Cmd::Sweep { config } => {
            let c = load(&config)?;
            prepare_dir(&c)?;
            let mut out = CsvTable::create(&c.output_dir.join("sweep.csv"), SWEEP_HEADER)?;
            let table = fujita_sweep(&c, &mut out)?;
            for (p, v) in &table.verdicts {
                println!("p = {p}: {} ({})", v.label(), v.describe());
            }
        }
        Cmd::Special { func, a, b, z } => {
            let mut t = table(&None, &["z", "value"])?;
            for x in z {
                let v = match func.as_str() {
                    "ml" => mittag_leffler(a, b, x)?,
                    "mainardi" => mainardi_phi(a, x)?,
                    "gamma" => gamma(x),
                    other => return Err(FracError::Config(format!("unknown function '{other}' (known: ml, mainardi, gamma)"))),
                };
                t.row(&[g17(x), g17(v)])?;
            }
        }
        Cmd::Report { config } => {
            let s = run_reports(&load(&config)?)?;
            println!("{}", s.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("FRACPAIR_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // Only fails if a pool already exists, which cannot happen here.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error code=2 kind=config message=\"FRACPAIR_THREADS must be a positive integer\"");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error code={code} message={:?}", e.to_string());
            ExitCode::from(code as u8)
        }
    }
}
