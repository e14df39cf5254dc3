mod config;

use clap::{Parser, ValueEnum};
use config::{ConfigError, RunConfig};
use rflow_core::catalog::{HalfPlaneBump, Instance, RicciFlowCap};
use rflow_core::diffusion::simulate_path;
use rflow_core::geometry::MetricFlow;
use rflow_core::report;
use rflow_core::rng::RngStream;
use rflow_core::suite::{self, Group, SuiteConfig};
use rflow_core::verify::CheckReport;
use rflow_core::Vector;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Simulate,
    OracleCompare,
    VerifyGradient,
    VerifyCoupling,
    VerifyHarnack,
    VerifyCurvature,
    VerifySuite,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::OracleCompare => "oracle-compare",
            Command::VerifyGradient => "verify-gradient",
            Command::VerifyCoupling => "verify-coupling",
            Command::VerifyHarnack => "verify-harnack",
            Command::VerifyCurvature => "verify-curvature",
            Command::VerifySuite => "verify-suite",
        }
    }

    fn groups(self) -> &'static [Group] {
        match self {
            Command::Simulate => &[],
            Command::OracleCompare => &[Group::OracleAgreement],
            Command::VerifyGradient => &[Group::Derivative, Group::GradientEstimate],
            Command::VerifyCoupling => &[Group::Coupling],
            Command::VerifyHarnack => &[Group::Girsanov, Group::VariableHarnack],
            Command::VerifyCurvature => &[Group::LocalTime, Group::Curvature],
            Command::VerifySuite => &suite::VERIFY_SUITE,
        }
    }
}

/// Simulate reflecting diffusions under metric flows and check the semigroup estimates.
#[derive(Debug, Parser)]
#[command(name = "rflow", version)]
struct Cli {
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (default: config, then RFLOW_WORKERS, then all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<rflow_core::Error> for Failure {
    fn from(e: rflow_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(reports) => {
            let failed: Vec<&CheckReport> = reports.iter().filter(|r| !r.pass).collect();
            if failed.is_empty() {
                eprintln!("{}: {} checks, all PASS", cli.command.name(), reports.len());
                ExitCode::SUCCESS
            } else {
                for r in &failed {
                    eprintln!("{}", report::summary_line(r));
                }
                eprintln!("{}: {} of {} checks FAILED", cli.command.name(), failed.len(), reports.len());
                ExitCode::from(1)
            }
        }
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<CheckReport>, Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set_workers(cli.workers.or(cfg.workers))?;
    let defaults = SuiteConfig::default();
    let scfg = SuiteConfig {
        n_paths: cfg.n_paths.unwrap_or(defaults.n_paths),
        dt: cfg.dt.unwrap_or(defaults.dt),
        seed: cli.seed.or(cfg.seed).unwrap_or(defaults.seed),
    };
    let instance = match &cfg.instance {
        Some(sec) => Some(Instance::from_key(&sec.key, &sec.params()).map_err(|e| ConfigError {
            key: "instance".into(),
            message: e.to_string(),
        })?),
        None => None,
    };

    let mut buf = Vec::new();
    let reports = if cli.command == Command::Simulate {
        let inst = instance.unwrap_or_else(|| Instance::from_key("interval-exp", &Default::default()).expect("default instance"));
        let x0 = cfg.instance.as_ref().and_then(|s| s.x0.clone());
        simulate(&inst, x0, &cfg, &scfg, &mut buf)?;
        Vec::new()
    } else {
        let reports = suite::run_groups(cli.command.groups(), &scfg, instance.as_ref())?;
        if reports.is_empty() {
            return Err(Failure::Config(ConfigError {
                key: "instance.key".into(),
                message: format!("`{}` has no checks for this instance", cli.command.name()),
            }));
        }
        report::write_checks(&mut buf, cli.command.name(), &reports)?;
        reports
    };

    // single writer, and only once everything has been computed
    let out = cli.out.clone().or(cfg.out.clone());
    match out {
        Some(p) => std::fs::write(&p, &buf).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&buf).map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    Ok(reports)
}

fn set_workers(explicit: Option<usize>) -> Result<(), Failure> {
    let n = match explicit {
        Some(n) => Some(n),
        None => match std::env::var("RFLOW_WORKERS") {
            Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError {
                key: "RFLOW_WORKERS".into(),
                message: format!("expected a positive integer, got '{v}'"),
            })?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(ConfigError { key: "--workers".into(), message: "must be positive, got 0".into() }.into());
    }
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn simulate(inst: &Instance, x0: Option<Vec<f64>>, cfg: &RunConfig, scfg: &SuiteConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let horizon = cfg.horizons.as_ref().map_or(1.0, |h| h[0]);
    let n_steps = cfg.n_steps.unwrap_or_else(|| scfg.steps(horizon));
    writeln!(out, "# schema: rflow simulate path v1").map_err(|e| Failure::Runtime(e.to_string()))?;
    match inst {
        Instance::Interval(f) => write_path(f, point(x0, [0.5 * f.length])?, horizon, n_steps, scfg.seed, out),
        Instance::Disk(f) => write_path(f, point(x0, [0.0, 0.0])?, horizon, n_steps, scfg.seed, out),
        Instance::Cap(f) => {
            let c = RicciFlowCap::centre();
            write_path(f, point(x0, [c[0], c[1]])?, horizon, n_steps, scfg.seed, out)
        }
        Instance::Bump(f) => write_path::<2, HalfPlaneBump>(f, point(x0, [0.0, f.width])?, horizon, n_steps, scfg.seed, out),
    }
}

fn point<const D: usize>(given: Option<Vec<f64>>, default: [f64; D]) -> Result<Vector<D>, Failure> {
    match given {
        None => Ok(Vector::<D>::from_column_slice(&default)),
        Some(v) if v.len() == D => Ok(Vector::<D>::from_column_slice(&v)),
        Some(v) => Err(ConfigError { key: "instance.x0".into(), message: format!("expected {D} coordinates, got {}", v.len()) }.into()),
    }
}

fn write_path<const D: usize, F: MetricFlow<D>>(flow: &F, x0: Vector<D>, horizon: f64, n_steps: usize, seed: u64, out: &mut Vec<u8>) -> Result<(), Failure> {
    if flow.boundary().is_some_and(|b| b.level(&x0) < 0.0) {
        return Err(ConfigError { key: "instance.x0".into(), message: format!("{:?} is outside the domain", x0.as_slice()) }.into());
    }
    let path = simulate_path(flow, x0, 0.0, horizon, n_steps, &mut RngStream::new(seed, 0))?;
    path.write_csv(out)?;
    Ok(())
}
