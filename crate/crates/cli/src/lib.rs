//! Command-line front end: subcommands, configuration, reports and figures.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub use commands::{
    cmd_becheck, cmd_feldman, cmd_field, cmd_gdr, cmd_nonconvex, cmd_nouc, cmd_sgdr, cmd_trajectory, cmd_warmup,
    BecheckParams, Check, CommandReport, FeldmanParams, FieldParams, GdrParams, NonconvexCmdParams, NoucCmdParams,
    SgdrCmdParams, TrajectoryParams, WarmupParams, SCHEMA_VERSION,
};
pub use output::{Format, Output};

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub enum Failure {
    /// Bad parameters or paths, detected before computing; exit code 2.
    Config(String),
    /// An error raised while computing; exit code 1.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

#[derive(Debug, Parser)]
#[command(name = "biaslab", version, about = "Counterexamples to implicit regularization of (S)GD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed; required by stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// TOML or JSON file with parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub trials: Option<usize>,

    /// Artifact formats to write (comma separated); all by default.
    #[arg(long, global = true, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gradient field of the segment objective.
    Field(FieldArgs),
    /// GD trajectory against the closed-form oracle.
    Trajectory(TrajectoryArgs),
    /// Deterministic GD certificate against a strongly convex regularizer.
    Warmup(WarmupArgs),
    /// Deterministic GD certificate against an arbitrary regularizer.
    Gdr(GdrArgs),
    /// Coupled-sample SGD experiment.
    Sgdr(SgdrArgs),
    /// Flip-class statistical complexity probe.
    Nouc(NoucArgs),
    /// Square-walk SGD event study.
    Nonconvex(NonconvexArgs),
    /// Berry–Esseen bound checks.
    Becheck(BecheckArgs),
    /// Statistical complexity of the hypercube.
    Feldman(FeldmanArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FieldArgs {
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrajectoryArgs {
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct WarmupArgs {
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub min_r_gap: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GdrArgs {
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SgdrArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub constant: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub cutoff_divisor: Option<usize>,
    #[arg(long)]
    pub regularizer: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct NoucArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub constant: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub subset_samples: Option<usize>,
    #[arg(long)]
    pub cutoff_divisor: Option<usize>,
    #[arg(long)]
    pub regularizer: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct NonconvexArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub regularizer: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct BecheckArgs {
    #[arg(long, value_delimiter = ',')]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct FeldmanArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub exact: Option<bool>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Field(_) => "field",
            Command::Trajectory(_) => "trajectory",
            Command::Warmup(_) => "warmup",
            Command::Gdr(_) => "gdr",
            Command::Sgdr(_) => "sgdr",
            Command::Nouc(_) => "nouc",
            Command::Nonconvex(_) => "nonconvex",
            Command::Becheck(_) => "becheck",
            Command::Feldman(_) => "feldman",
        }
    }
}

/// The outcome of a completed run.
#[derive(Debug)]
pub struct Completed {
    pub report: CommandReport,
    pub files: Vec<String>,
    pub exit_code: i32,
}

fn flags_with_trials<A: Serialize>(args: &A, trials: Option<usize>) -> Map<String, Value> {
    let mut flags = config::flags_of(args);
    if let Some(t) = trials {
        flags.insert("trials".into(), Value::from(t));
    }
    flags
}

/// Resolves parameters, runs the subcommand and writes the report and the
/// manifest.
pub fn execute(cli: &Cli) -> Result<Completed, Failure> {
    let started = Instant::now();
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let file = file.as_ref();
    let seed = config::seed(cli.seed, file)?;
    let name = cli.command.name();
    let t = cli.trials;

    macro_rules! resolved {
        ($ty:ty, $args:expr, $trials:expr) => {{
            let flags = if $trials { flags_with_trials($args, t) } else { config::flags_of($args) };
            config::resolve(&<$ty>::default(), file, name, flags)?
        }};
    }

    // resolve everything before touching the file system
    enum Plan {
        Field(FieldParams),
        Trajectory(TrajectoryParams),
        Warmup(WarmupParams),
        Gdr(GdrParams),
        Sgdr(SgdrCmdParams),
        Nouc(NoucCmdParams),
        Nonconvex(NonconvexCmdParams),
        Becheck(BecheckParams),
        Feldman(FeldmanParams),
    }
    let plan = match &cli.command {
        Command::Field(a) => Plan::Field(resolved!(FieldParams, a, false)),
        Command::Trajectory(a) => Plan::Trajectory(resolved!(TrajectoryParams, a, false)),
        Command::Warmup(a) => Plan::Warmup(resolved!(WarmupParams, a, false)),
        Command::Gdr(a) => Plan::Gdr(resolved!(GdrParams, a, false)),
        Command::Sgdr(a) => Plan::Sgdr(resolved!(SgdrCmdParams, a, true)),
        Command::Nouc(a) => Plan::Nouc(resolved!(NoucCmdParams, a, true)),
        Command::Nonconvex(a) => Plan::Nonconvex(resolved!(NonconvexCmdParams, a, true)),
        Command::Becheck(a) => Plan::Becheck(resolved!(BecheckParams, a, true)),
        Command::Feldman(a) => Plan::Feldman(resolved!(FeldmanParams, a, true)),
    };

    let mut out = Output::new(&cli.out_dir, &cli.format)?;
    let report = match &plan {
        Plan::Field(p) => cmd_field(p, &mut out)?,
        Plan::Trajectory(p) => cmd_trajectory(p, &mut out)?,
        Plan::Warmup(p) => cmd_warmup(p, &mut out)?,
        Plan::Gdr(p) => cmd_gdr(p, &mut out)?,
        Plan::Sgdr(p) => cmd_sgdr(p, seed, &mut out)?,
        Plan::Nouc(p) => cmd_nouc(p, seed, &mut out)?,
        Plan::Nonconvex(p) => cmd_nonconvex(p, seed, &mut out)?,
        Plan::Becheck(p) => cmd_becheck(p, seed, &mut out)?,
        Plan::Feldman(p) => cmd_feldman(p, seed, &mut out)?,
    };
    finish(report, out, started)
}

/// Writes `<subcommand>.json` (when enabled) and `manifest.json`.
pub fn finish(report: CommandReport, mut out: Output, started: Instant) -> Result<Completed, Failure> {
    let body = serde_json::to_string_pretty(&report.to_json()).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.write(&format!("{}.json", report.subcommand), Format::Json, &(body + "\n"))?;
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "subcommand": report.subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": report.seed,
        "params": report.params,
        "files": out.files(),
        "passed": report.passed(),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.write_always("manifest.json", &(text + "\n"))?;
    let exit_code = if report.passed() { 0 } else { 1 };
    Ok(Completed { files: out.files().to_vec(), report, exit_code })
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(done) => {
            for c in &done.report.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} file(s) to {}", done.files.len(), cli.out_dir.display());
            done.exit_code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
