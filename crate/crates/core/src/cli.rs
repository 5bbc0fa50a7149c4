//! Command-line front end: configuration loading, dispatch and emission.
//!
//! A run is described by a single JSON document whose sections mirror the
//! subcommand flags; flags override file values.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::cq::{self, CQParams};
use crate::error::{Error, Result};
use crate::model::{assemble_drift_noise, characteristic_polynomial, OscillatorParams, SystemParams, P1, Q1, Q2};
use crate::poly;
use crate::sde::{self, InitialCondition, SimConfig};
use crate::spectral::{self, CorrelatorPair, FftOptions, InformationRoute, PerturbativeOrder};
use crate::stability;
use crate::steadystate::{self, CovarianceMatrix, EvolveOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HYBRID_OSC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hybrid-osc", version, about = "Coupled stochastic oscillators: steady states, correlators, Monte Carlo and the classical-quantum mapping")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Euler-Maruyama ensemble statistics.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Routh-Hurwitz report and drift eigenvalues.
    Stability {
        #[command(flatten)]
        system: SystemArgs,
    },
    /// Steady-state covariance by closed form and by Lyapunov solve.
    Steadystate {
        #[command(flatten)]
        system: SystemArgs,
    },
    /// Time-domain correlators and response functions.
    Correlators {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: CorrelatorArgs,
    },
    /// Poles of the Green's function.
    Poles {
        #[command(flatten)]
        system: SystemArgs,
        /// Also report the expansion in the coupling.
        #[arg(long, value_enum)]
        perturbative: Option<OrderArg>,
    },
    /// Classical-quantum hybrid: temperature, occupation and equal-time moments.
    Cq {
        #[command(flatten)]
        cq: CqArgs,
    },
    /// Full cross-check suite.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    First,
    Second,
}

impl From<OrderArg> for PerturbativeOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::First => PerturbativeOrder::First,
            OrderArg::Second => PerturbativeOrder::Second,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    /// Residues, falling back to small-coupling forms on degenerate poles.
    Auto,
    Exact,
    SmallLambda,
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Stability,
    Steadystate,
    Correlators,
    Poles,
    Cq,
    Verify,
}

/// Coupled-system parameters; unset values fall back to the config file,
/// then to `m = k = alpha = D1 = D2 = 1`, `lambda = 0.05`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemArgs {
    #[arg(long)]
    pub m1: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "D1")]
    #[serde(rename = "D1")]
    pub d1: Option<f64>,
    #[arg(long)]
    pub m2: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long = "D2")]
    #[serde(rename = "D2")]
    pub d2: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl SystemArgs {
    fn merge(self, file: Self) -> Self {
        Self {
            m1: self.m1.or(file.m1),
            k1: self.k1.or(file.k1),
            alpha: self.alpha.or(file.alpha),
            d1: self.d1.or(file.d1),
            m2: self.m2.or(file.m2),
            k2: self.k2.or(file.k2),
            d2: self.d2.or(file.d2),
            lambda: self.lambda.or(file.lambda),
        }
    }

    fn resolve(&self) -> Result<SystemParams> {
        SystemParams::new(
            OscillatorParams::new(
                self.m1.unwrap_or(1.0),
                self.k1.unwrap_or(1.0),
                self.alpha.unwrap_or(1.0),
                self.d1.unwrap_or(1.0),
            )?,
            OscillatorParams::new(self.m2.unwrap_or(1.0), self.k2.unwrap_or(1.0), 0.0, self.d2.unwrap_or(1.0))?,
            self.lambda.unwrap_or(0.05),
        )
    }
}

/// Ensemble settings.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimArgs {
    /// Time step [default: 5e-4].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time [default: 10].
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Number of trajectories [default: 1000].
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Seed of the per-trajectory streams [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between recorded rows [default: 1000].
    #[arg(long)]
    pub stride: Option<usize>,
    /// `origin`, `stationary`, or a point `q1,p1,q2,p2` [default: origin].
    #[arg(long)]
    pub initial: Option<String>,
}

impl SimArgs {
    fn merge(self, file: Self) -> Self {
        Self {
            dt: self.dt.or(file.dt),
            t_final: self.t_final.or(file.t_final),
            trajectories: self.trajectories.or(file.trajectories),
            seed: self.seed.or(file.seed),
            stride: self.stride.or(file.stride),
            initial: self.initial.or(file.initial),
        }
    }

    fn resolve(&self) -> Result<(SimConfig, InitialSpec)> {
        let cfg = SimConfig::new(
            self.dt.unwrap_or(5e-4),
            self.t_final.unwrap_or(10.0),
            self.trajectories.unwrap_or(1000),
            self.seed.unwrap_or(42),
        )
        .with_stride(self.stride.unwrap_or(1000));
        let spec = match self.initial.as_deref().map(str::trim) {
            None | Some("origin") => InitialSpec::Point(Vector4::zeros()),
            Some("stationary") => InitialSpec::Stationary,
            Some(s) => {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Config(format!("initial state `{s}`: {e}")))?;
                if v.len() != 4 {
                    return Err(Error::Config(format!("initial state needs 4 components, got {}", v.len())));
                }
                InitialSpec::Point(Vector4::from_column_slice(&v))
            }
        };
        Ok((cfg, spec))
    }
}

/// Starting distribution of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    Point(Vector4<f64>),
    /// Gaussian with the steady-state covariance.
    Stationary,
}

/// Correlator grid settings.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorArgs {
    /// Largest |t| [default: 20].
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Grid points on [-t_max, t_max] [default: 401].
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

impl CorrelatorArgs {
    fn merge(self, file: Self) -> Self {
        Self { t_max: self.t_max.or(file.t_max), points: self.points.or(file.points), method: self.method.or(file.method) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatorSettings {
    pub t_max: f64,
    pub points: usize,
    pub method: MethodArg,
}

/// Hybrid-system parameters; defaults `m = k = alpha = D = 1`, `lambda = 0.05`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqArgs {
    #[arg(long = "D")]
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "mC")]
    #[serde(rename = "mC")]
    pub m_c: Option<f64>,
    #[arg(long = "mQ")]
    #[serde(rename = "mQ")]
    pub m_q: Option<f64>,
    #[arg(long = "kC")]
    #[serde(rename = "kC")]
    pub k_c: Option<f64>,
    #[arg(long = "kQ")]
    #[serde(rename = "kQ")]
    pub k_q: Option<f64>,
    /// Decoherence strength; saturates 4 D D0 = 1 when absent.
    #[arg(long = "D0")]
    #[serde(rename = "D0")]
    pub d0: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
}

impl CqArgs {
    fn merge(self, file: Self) -> Self {
        Self {
            d: self.d.or(file.d),
            alpha: self.alpha.or(file.alpha),
            lambda: self.lambda.or(file.lambda),
            m_c: self.m_c.or(file.m_c),
            m_q: self.m_q.or(file.m_q),
            k_c: self.k_c.or(file.k_c),
            k_q: self.k_q.or(file.k_q),
            d0: self.d0.or(file.d0),
            hbar: self.hbar.or(file.hbar),
        }
    }

    fn resolve(&self) -> Result<CQParams> {
        let classical = OscillatorParams::new(
            self.m_c.unwrap_or(1.0),
            self.k_c.unwrap_or(1.0),
            self.alpha.unwrap_or(1.0),
            self.d.unwrap_or(1.0),
        )?;
        let mut p = CQParams::new(classical, self.m_q.unwrap_or(1.0), self.k_q.unwrap_or(1.0), self.lambda.unwrap_or(0.05))?;
        if let Some(d0) = self.d0 {
            p = p.with_decoherence(d0)?;
        }
        if let Some(h) = self.hbar {
            p = p.with_hbar(h)?;
        }
        Ok(p)
    }
}

/// JSON run configuration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub params: SystemArgs,
    #[serde(default)]
    pub sim: SimArgs,
    #[serde(default)]
    pub correlators: CorrelatorArgs,
    #[serde(default)]
    pub cq: CqArgs,
    pub perturbative: Option<OrderArg>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub system: SystemParams,
    pub cq: CQParams,
    pub sim: SimConfig,
    pub initial: InitialSpec,
    pub correlators: CorrelatorSettings,
    pub perturbative: Option<PerturbativeOrder>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let (mode, system, sim, grid, cqa, order) = match cli.command {
            Command::Simulate { system, sim } => (Mode::Simulate, system, sim, CorrelatorArgs::default(), CqArgs::default(), None),
            Command::Stability { system } => (Mode::Stability, system, SimArgs::default(), CorrelatorArgs::default(), CqArgs::default(), None),
            Command::Steadystate { system } => {
                (Mode::Steadystate, system, SimArgs::default(), CorrelatorArgs::default(), CqArgs::default(), None)
            }
            Command::Correlators { system, grid } => (Mode::Correlators, system, SimArgs::default(), grid, CqArgs::default(), None),
            Command::Poles { system, perturbative } => {
                (Mode::Poles, system, SimArgs::default(), CorrelatorArgs::default(), CqArgs::default(), perturbative)
            }
            Command::Cq { cq } => (Mode::Cq, SystemArgs::default(), SimArgs::default(), CorrelatorArgs::default(), cq, None),
            Command::Verify { system, sim } => (Mode::Verify, system, sim, CorrelatorArgs::default(), CqArgs::default(), None),
        };
        if let Some(m) = file.mode {
            if m != mode {
                return Err(Error::Config(format!("config file mode {m:?} conflicts with subcommand {mode:?}")));
            }
        }
        let system = system.merge(file.params).resolve()?;
        let (sim, initial) = sim.merge(file.sim).resolve()?;
        let grid = grid.merge(file.correlators);
        let correlators = CorrelatorSettings {
            t_max: grid.t_max.unwrap_or(20.0),
            points: grid.points.unwrap_or(401),
            method: grid.method.unwrap_or(MethodArg::Auto),
        };
        let cq = if mode == Mode::Verify && cqa.d.is_none() && file.cq.d.is_none() {
            cq_from_system(&system)?
        } else {
            cqa.merge(file.cq).resolve()?
        };
        let format = cli.format.or(file.format).unwrap_or(match mode {
            Mode::Simulate | Mode::Correlators => Format::Csv,
            _ => Format::Json,
        });
        let output = cli.output.or(file.output);
        if let Some(dir) = output.as_ref().and_then(|p| p.parent()).filter(|d| !d.as_os_str().is_empty()) {
            if !dir.is_dir() {
                return Err(Error::Config(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(Self {
            mode,
            system,
            cq,
            sim,
            initial,
            correlators,
            perturbative: order.or(file.perturbative).map(Into::into),
            output,
            format,
        })
    }
}

/// Hybrid system built on oscillator 1 as the classical side and oscillator 2 as the quantum side.
fn cq_from_system(p: &SystemParams) -> Result<CQParams> {
    CQParams::new(p.osc1, p.osc2.mass, p.osc2.spring_constant, p.coupling)
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::TradeoffViolation { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Parses arguments, configures threads, runs and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let outcome = RunConfig::from_cli(cli).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Applies `HYBRID_OSC_THREADS` to the global pool.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?;
    if n == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
    }
    // A second initialisation in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Executes a run and writes its artifact. Returns `false` only when
/// verification fails.
pub fn run(cfg: &RunConfig) -> Result<bool> {
    let mut sink: Box<dyn Write> = match &cfg.output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let passed = run_to(cfg, &mut sink)?;
    sink.flush().map_err(|e| Error::Config(format!("write failed: {e}")))?;
    Ok(passed)
}

/// As [`run`], writing to the given sink.
pub fn run_to(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let p = &cfg.system;
    match cfg.mode {
        Mode::Simulate => {
            let stats = simulate(cfg)?;
            if !stats.aborted.is_empty() {
                log::warn!("{} trajectories aborted", stats.aborted.len());
            }
            match cfg.format {
                Format::Csv => stats.write_csv(&mut *out)?,
                Format::Json => write_json(out, &stats)?,
            }
        }
        Mode::Stability => write_json(out, &require_json(cfg, stability::routh_hurwitz(p)?)?)?,
        Mode::Steadystate => write_json(out, &require_json(cfg, steadystate_report(p)?)?)?,
        Mode::Correlators => {
            let table = correlator_table(p, cfg.correlators)?;
            match cfg.format {
                Format::Csv => table.write_csv(&mut *out)?,
                Format::Json => write_json(out, &table)?,
            }
        }
        Mode::Poles => {
            let exact = spectral::find_poles(p)?;
            let report = PolesReport {
                exact,
                max_root_error: exact.max_root_error(p),
                perturbative: cfg.perturbative.map(|o| spectral::perturbative_poles(p, o)).transpose()?,
            };
            write_json(out, &require_json(cfg, report)?)?
        }
        Mode::Cq => write_json(out, &require_json(cfg, cq_report(&cfg.cq)?)?)?,
        Mode::Verify => {
            let report = verify(cfg)?;
            for c in &report.checks {
                log::info!("{} {} {:e} (tol {:e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.discrepancy, c.tolerance);
            }
            write_json(out, &require_json(cfg, &report)?)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn require_json<T>(cfg: &RunConfig, v: T) -> Result<T> {
    if cfg.format != Format::Json {
        return Err(Error::Config(format!("{:?} output is JSON only", cfg.mode)));
    }
    Ok(v)
}

fn write_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(|e| Error::Config(format!("json output: {e}")))?;
    writeln!(out).map_err(|e| Error::Config(format!("write failed: {e}")))
}

fn simulate(cfg: &RunConfig) -> Result<sde::EnsembleStats> {
    let dn = assemble_drift_noise(&cfg.system)?;
    let initial = match cfg.initial {
        InitialSpec::Point(z) => InitialCondition::Point(z),
        InitialSpec::Stationary => {
            InitialCondition::Gaussian { mean: Vector4::zeros(), cov: steadystate::solve_lyapunov(&dn)? }
        }
    };
    sde::simulate_ensemble(&dn, &cfg.sim.with_initial(initial))
}

#[derive(Debug, Serialize)]
pub struct SteadyStateReport {
    pub closed_form: CovarianceMatrix,
    pub lyapunov: CovarianceMatrix,
    /// `max |dC_ij| / sqrt(C_ii C_jj)` between the two routes.
    pub max_discrepancy: f64,
    pub lyapunov_residual: f64,
    pub is_psd: bool,
}

pub fn steadystate_report(p: &SystemParams) -> Result<SteadyStateReport> {
    let dn = assemble_drift_noise(p)?;
    let lyapunov = steadystate::solve_lyapunov(&dn)?;
    let closed_form = steadystate::closed_form_covariances(p)?;
    Ok(SteadyStateReport {
        max_discrepancy: lyapunov.scaled_deviation(&closed_form),
        lyapunov_residual: steadystate::lyapunov_residual_norm(&dn, &lyapunov),
        is_psd: lyapunov.is_psd(),
        closed_form,
        lyapunov,
    })
}

#[derive(Debug, Serialize)]
struct PolesReport {
    exact: spectral::PoleSet,
    max_root_error: f64,
    perturbative: Option<spectral::PoleSet>,
}

fn time_grid(t_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_max >= 0.0 && t_max.is_finite()) || points == 0 {
        return Err(Error::Config("correlator grid needs t_max >= 0 and points >= 1".into()));
    }
    if points == 1 {
        return Ok(vec![0.0]);
    }
    Ok((0..points).map(|k| -t_max + 2.0 * t_max * k as f64 / (points - 1) as f64).collect())
}

pub fn correlator_table(p: &SystemParams, s: CorrelatorSettings) -> Result<spectral::CorrelatorTable> {
    let grid = time_grid(s.t_max, s.points)?;
    match s.method {
        MethodArg::Exact => spectral::correlators_exact(p, &grid),
        MethodArg::SmallLambda => spectral::correlators_small_lambda(p, &grid, p.is_identical()),
        MethodArg::Fft => spectral::correlators_fft(p, s.t_max, FftOptions::default()),
        MethodArg::Auto => match spectral::correlators_exact(p, &grid) {
            Err(Error::DegeneratePoles { separation }) => {
                log::warn!("degenerate poles (separation {separation:e}); using small-coupling forms");
                spectral::correlators_small_lambda(p, &grid, p.is_identical())
            }
            other => other,
        },
    }
}

#[derive(Debug, Serialize)]
pub struct CqReport {
    #[serde(rename = "T_C")]
    pub t_c: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub keldysh_occupation: f64,
    pub equal_time: cq::HybridEqualTime,
    pub gibbs_deviation: f64,
    pub params: CQParams,
}

pub fn cq_report(c: &CQParams) -> Result<CqReport> {
    let occ = cq::occupation_number(c)?;
    let thermal = cq::thermal_limit(c)?;
    Ok(CqReport {
        t_c: occ.t_c,
        n: occ.n,
        keldysh_occupation: cq::keldysh_occupation(c)?,
        equal_time: cq::hybrid_equal_time(c)?,
        gibbs_deviation: thermal.gibbs_deviation,
        params: *c,
    })
}

/// One cross-check with its measured discrepancy.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub module: &'static str,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: bool,
    pub note: Option<String>,
}

impl Check {
    fn measure(module: &'static str, name: &'static str, tolerance: f64, r: Result<f64>) -> Self {
        match r {
            Ok(d) => Self { name, module, discrepancy: d, tolerance, passed: d <= tolerance, skipped: false, note: None },
            Err(e) => Self {
                name,
                module,
                discrepancy: f64::NAN,
                tolerance,
                passed: false,
                skipped: false,
                note: Some(e.to_string()),
            },
        }
    }

    fn skip(module: &'static str, name: &'static str, why: &str) -> Self {
        Self { name, module, discrepancy: 0.0, tolerance: 0.0, passed: true, skipped: true, note: Some(why.into()) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub params: SystemParams,
    pub cq_params: CQParams,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

/// Runs every cross-check on the configured parameters. Errors only when
/// the system has no steady state.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let p = &cfg.system;
    let report = stability::routh_hurwitz(p)?;
    if !report.is_stable() {
        return Err(Error::NotStable { min_real_part: report.min_real_part });
    }
    let dn = assemble_drift_noise(p)?;
    let lyap = steadystate::solve_lyapunov(&dn)?;
    let mut checks = Vec::new();

    // stability
    checks.push(Check::measure("stability", "eigenvalues_vs_quartic_roots", 1e-9, (|| {
        let ev = stability::drift_eigenvalues(p)?;
        let roots = poly::roots(&poly::from_real(&characteristic_polynomial(p)))
            .ok_or_else(|| Error::ClassificationFailure("quartic has no roots".into()))?;
        let scale = ev.iter().map(|e| e.norm()).fold(f64::MIN_POSITIVE, f64::max);
        Ok(max_abs(ev.iter().map(|e| roots.iter().map(|r| (r - e).norm()).fold(f64::INFINITY, f64::min) / scale)))
    })()));
    checks.push(Check::measure("stability", "routh_hurwitz_vs_eigenvalues", 0.0, {
        let d = stability::hurwitz_detail(p);
        let direct = report.min_real_part > 0.0 && d.delta2 > 0.0 && d.delta3 > 0.0;
        Ok(if direct == report.routh_hurwitz_pass { 0.0 } else { 1.0 })
    }));

    // steadystate
    checks.push(Check::measure("steadystate", "closed_form_vs_lyapunov", 1e-8, (|| {
        Ok(lyap.scaled_deviation(&steadystate::closed_form_covariances(p)?))
    })()));
    checks.push(Check::measure("steadystate", "lyapunov_residual", 1e-10, {
        let q = dn.noise_covariance().abs().max().max(f64::MIN_POSITIVE);
        Ok(steadystate::lyapunov_residual_norm(&dn, &lyap) / q)
    }));
    checks.push(Check::measure("steadystate", "covariance_psd", 1e-10, Ok((-lyap.min_eigenvalue() / lyap.scale()).max(0.0))));
    checks.push(Check::measure("steadystate", "evolve_moments_late_time", 1e-8, (|| {
        let t = 30.0 / report.min_real_part;
        let states = steadystate::evolve_moments(&dn, &CovarianceMatrix::zeros(), &Vector4::zeros(), &[0.0, t], EvolveOptions::default())?;
        Ok(lyap.scaled_deviation(&states.last().expect("grid is non-empty").cov))
    })()));

    // sde
    let sim = cfg
        .sim
        .with_initial(InitialCondition::Gaussian { mean: Vector4::zeros(), cov: lyap })
        .with_stride(usize::MAX);
    let stats = sde::check_step(&dn, sim.dt).and_then(|_| sde::simulate_ensemble(&dn, &sim));
    checks.push(Check::measure("sde", "monte_carlo_vs_lyapunov_in_se", 4.0, stats.as_ref().map_err(Clone::clone).map(|s| {
        let row = s.last();
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in i..4 {
                worst = worst.max((row.cov.get(i, j) - lyap.get(i, j)).abs() / row.cov_stderr[i][j]);
            }
        }
        worst
    })));
    checks.push(Check::measure("sde", "energy_drift_in_se", 4.0, stats.as_ref().map_err(Clone::clone).map(|s| {
        let row = s.last();
        let cov = row.cov;
        let se = p.osc1.damping / p.osc1.mass.powi(2) * row.cov_stderr[P1][P1];
        sde::energy_drift(p, &cov).abs() / se
    })));
    checks.push(Check::measure("sde", "trajectory_reproducible", 0.0, (|| {
        let short = SimConfig::new(sim.dt, (200.0 * sim.dt).min(sim.t_final), 1, sim.seed).with_initial(sim.initial);
        let a = sde::sample_trajectory(&dn, &short, 7)?;
        let b = sde::sample_trajectory(&dn, &short, 7)?;
        Ok(if a == b { 0.0 } else { 1.0 })
    })()));

    // spectral
    checks.push(Check::measure("spectral", "greens_times_inverse", 1e-10, (|| {
        let w2 = p.osc2.omega().max(1e-3);
        let mut worst: f64 = 0.0;
        for w in [0.0, 0.37 * w2, 1.9 * w2, -2.7 * w2] {
            let g = spectral::greens(p, w)?;
            let inv = spectral::greens_inverse(p, w);
            let scale = g.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max) * inv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let e = g.matrix * inv - Matrix4::identity();
            worst = worst.max(e.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale);
        }
        Ok(worst)
    })()));
    let poles = spectral::find_poles(p);
    checks.push(Check::measure("spectral", "pole_reflection", 1e-9, poles.as_ref().map_err(Clone::clone).map(|ps| {
        let d = ps.roots_of_d();
        let dc = ps.roots_of_d_conj();
        let scale = d.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
        let refl = max_abs(dc.iter().map(|z| d.iter().map(|r| (r - z.conj()).norm()).fold(f64::INFINITY, f64::min) / scale));
        refl.max(ps.max_root_error(p))
    })));
    checks.push(if p.osc1.omega_sq() > p.gamma1().powi(2) / 4.0 {
        Check::measure("spectral", "perturbative_second_order_gain", 1.0, poles.as_ref().map_err(Clone::clone).and_then(|ex| {
            let err = |o| -> Result<f64> {
                let q = spectral::perturbative_poles(p, o)?;
                Ok((q.omega1 - ex.omega1).norm().max((q.omega2 - ex.omega2).norm()))
            };
            let (e1, e2) = (err(PerturbativeOrder::First)?, err(PerturbativeOrder::Second)?);
            Ok(e2 / e1.max(f64::MIN_POSITIVE))
        }))
    } else {
        Check::skip("spectral", "perturbative_second_order_gain", "overdamped oscillator")
    });
    let exact0 = spectral::correlators_exact(p, &[0.0]);
    checks.push(Check::measure("spectral", "equal_time_residue_vs_lyapunov", 1e-8, exact0.as_ref().map_err(Clone::clone).map(|t| {
        let at = |pair| t.get(pair).expect("pair present")[0];
        let s = |i: usize, j: usize| (lyap.get(i, i) * lyap.get(j, j)).sqrt();
        max_abs([
            (at(CorrelatorPair::Q1Q1) - lyap.get(Q1, Q1)) / s(Q1, Q1),
            (at(CorrelatorPair::Q2Q2) - lyap.get(Q2, Q2)) / s(Q2, Q2),
            (at(CorrelatorPair::Q1Q2) - lyap.get(Q1, Q2)) / s(Q1, Q2),
        ])
    })));
    checks.push(Check::measure("spectral", "fft_vs_residue", 1e-6, (|| {
        let fft = spectral::correlators_fft(p, 5.0, FftOptions::default())?;
        let exact = spectral::correlators_exact(p, &fft.times)?;
        let s = |pair| match pair {
            CorrelatorPair::Q1Q1 => lyap.get(Q1, Q1),
            CorrelatorPair::Q2Q2 => lyap.get(Q2, Q2),
            _ => (lyap.get(Q1, Q1) * lyap.get(Q2, Q2)).sqrt(),
        };
        Ok(max_abs(fft.pairs.iter().flat_map(|&pair| {
            let (a, b) = (fft.get(pair).expect("pair present"), exact.get(pair).expect("pair present"));
            a.iter().zip(b).map(move |(x, y)| (x - y) / s(pair)).collect::<Vec<_>>()
        })))
    })()));
    let small_ok = p.is_identical() && p.coupling <= 0.1 && p.osc1.omega_sq() > p.gamma1().powi(2) / 4.0 && p.osc2.diffusion > 0.0;
    if small_ok {
        let small0 = spectral::correlators_small_lambda(p, &[0.0], true);
        checks.push(Check::measure("spectral", "small_lambda_g22_vs_residue", 0.05, (|| {
            let s = small0.as_ref().map_err(Clone::clone)?.get(CorrelatorPair::Q2Q2).expect("pair present")[0];
            let e = exact0.as_ref().map_err(Clone::clone)?.get(CorrelatorPair::Q2Q2).expect("pair present")[0];
            Ok(((s - e) / e).abs())
        })()));
        checks.push(Check::measure("spectral", "sigma_ratio_consistency", 1e-12, (|| {
            let t = small0.as_ref().map_err(Clone::clone)?;
            let direct = (t.get(CorrelatorPair::Q1Q1).expect("pair present")[0] / t.get(CorrelatorPair::Q2Q2).expect("pair present")[0]).sqrt();
            let r = spectral::sigma_ratio(p)?;
            Ok(((r - direct) / direct).abs())
        })()));
    } else {
        checks.push(Check::skip("spectral", "small_lambda_g22_vs_residue", "small-coupling forms need identical underdamped oscillators, lambda <= 0.1"));
        checks.push(Check::skip("spectral", "sigma_ratio_consistency", "small-coupling forms need identical underdamped oscillators, lambda <= 0.1"));
    }
    checks.push(Check::measure("spectral", "mutual_information_exact_route", 1e-12, (|| {
        let t = 1.3;
        let table = spectral::correlators_exact(p, &[t])?;
        let r = table.get(CorrelatorPair::Q1Q2).expect("pair present")[0] / (lyap.get(Q1, Q1) * lyap.get(Q2, Q2)).sqrt();
        let want = spectral::information_from_correlation(r)?;
        let got = spectral::mutual_information(p, CorrelatorPair::Q1Q2, t, InformationRoute::Exact)?;
        let _ = spectral::correlation_coefficient(p, CorrelatorPair::Q1Q1, t, InformationRoute::Exact)?;
        Ok((got - want).abs() / want.abs().max(1e-300).max(1e-3))
    })()));

    // cq
    let c = &cfg.cq;
    checks.push(Check::measure("cq", "mapped_quantum_diffusion", 1e-14, (|| {
        let mapped = cq::map_to_classical(c)?;
        let want = c.coupling.powi(2) * c.hbar.powi(2) * c.decoherence;
        Ok((mapped.osc2.diffusion - want).abs() / want.max(f64::MIN_POSITIVE))
    })()));
    checks.push(Check::measure("cq", "equal_time_vs_mapped_lyapunov", 1e-9, (|| {
        let a = cq::hybrid_equal_time(c)?.to_covariance();
        let b = cq::hybrid_equal_time_lyapunov(c)?.to_covariance();
        Ok(b.scaled_deviation(&a))
    })()));
    checks.push(Check::measure("cq", "occupation_at_half_frequency", 1e-12, (|| {
        let w = c.quantum_omega() * c.hbar;
        let cl = OscillatorParams::new(c.classical.mass, c.classical.spring_constant, c.classical.diffusion / w, c.classical.diffusion)?;
        let at = CQParams::new(cl, c.quantum_mass, c.quantum_spring_constant, c.coupling)?.with_hbar(c.hbar)?;
        Ok((cq::occupation_number(&at)?.n - 0.5).abs())
    })()));
    checks.push(Check::measure("cq", "occupation_lower_bound", 1e-12, cq::occupation_number(c).map(|o| (0.5 - o.n).max(0.0))));
    checks.push(Check::measure("cq", "keldysh_occupation_nonnegative", 1e-9, cq::keldysh_occupation(c).map(|n| (-n).max(0.0))));
    checks.push(Check::measure("cq", "hybrid_correlators_finite_at_tiny_coupling", 0.0, (|| {
        let m = c.classical.mass;
        let w = c.classical.omega();
        let tiny = CQParams::new(c.classical, m, m * w * w, 1e-8)?;
        let h = cq::hybrid_correlators(&tiny, &[-3.0, -0.5, 0.0, 0.5, 3.0])?;
        let all = h.qq.iter().chain(&h.keldysh).chain(&h.classical_response).chain(&h.quantum_response_imag).chain(&h.minus_minus()).all(|v| v.is_finite());
        Ok(if all { 0.0 } else { 1.0 })
    })()));
    checks.push(Check::measure("cq", "high_temperature_forms_vs_gibbs", 1e-12, cq::thermal_limit(c).map(|r| r.gibbs.scaled_deviation(&{
        let h = r.high_temperature;
        let mut m = Matrix4::zeros();
        m[(0, 0)] = h.q2;
        m[(1, 1)] = h.p2;
        m[(2, 2)] = h.qq;
        m[(3, 3)] = h.pp;
        m[(0, 2)] = h.q_q;
        m[(2, 0)] = h.q_q;
        CovarianceMatrix::new(m).expect("finite")
    }))));
    checks.push(Check::measure("model", "energy_matches_hamiltonian", 1e-12, {
        let z = Vector4::new(0.3, -0.2, 0.7, 0.1);
        let h = p.hamiltonian_matrix();
        let quad = 0.5 * (z.transpose() * h * z)[(0, 0)];
        Ok(((dn.energy(&z) - quad) / quad.abs().max(f64::MIN_POSITIVE)).abs())
    }));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { params: *p, cq_params: *c, checks, passed })
}
