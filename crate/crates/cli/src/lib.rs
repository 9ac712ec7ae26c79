//! Command-line front end: `fit`, `compare`, `nulltest`, `simulate` and
//! `project`.
//!
//! Exit codes are stable: 0 success, 2 usage error, 3 invalid configuration
//! (including referenced files that do not exist), 4 unreadable or unusable
//! data, 5 numerical failure. Errors are reported as one JSON line on stderr.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;
use crate::output::OutputDir;

pub const SEED_ENV: &str = "CAUSAL_DENSITY_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn config(e: impl ToString) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn data(e: impl ToString) -> Self {
        CliError::Data(e.to_string())
    }

    /// Errors raised while fitting: bad arguments are configuration problems,
    /// everything else is numerical.
    pub fn fitting(e: causal_density::Error) -> Self {
        match e {
            causal_density::Error::InvalidArgument(m) => CliError::Config(m),
            e => CliError::Numerical(e.to_string()),
        }
    }

    fn line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string().replace('\n', " "),
        })
        .to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "causal-density", version, about = "Causal density reconstruction and direction scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the environment and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write SVG figures.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file(s) with header `age,log10_load`.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Lower cut on y.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Log-determinant probe count.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Fail on malformed rows instead of skipping them.
    #[arg(long)]
    pub strict_parse: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model and write its density and conditional grids.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// x->y, y->x or independent.
        #[arg(long)]
        direction: Option<String>,
    },
    /// Score the causal directions against independence.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Restrict to x->y or y->x.
        #[arg(long)]
        direction: Option<String>,
    },
    /// Score x->y on copies of the data with shuffled y.
    Nulltest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Draw a synthetic dataset from a random or stored truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// causal or independent.
        #[arg(long)]
        preset: Option<String>,
        /// Expected number of points.
        #[arg(long)]
        n: Option<usize>,
        /// Stored truth (`truth.json` of an earlier run).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Project the infectivity curve through a saved fit.
    Project {
        #[command(flatten)]
        common: CommonArgs,
        /// `posterior.json` of a fit, or the directory holding it.
        #[arg(long)]
        fit: PathBuf,
        /// Tabulated `log10_load,infectivity` curve.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit { .. } => "fit",
            Command::Compare { .. } => "compare",
            Command::Nulltest { .. } => "nulltest",
            Command::Simulate { .. } => "simulate",
            Command::Project { .. } => "project",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Fit { common, .. }
            | Command::Compare { common, .. }
            | Command::Nulltest { common, .. }
            | Command::Simulate { common, .. }
            | Command::Project { common, .. } => common,
        }
    }
}

/// A configuration with every command-line override applied.
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub strict_parse: bool,
    pub plots: bool,
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn apply_data_args(config: &mut RunConfig, data: &DataArgs) {
    if !data.data.is_empty() {
        config.data = data.data.clone();
        config.labels.clear();
    }
    if let Some(t) = data.threshold {
        config.threshold = t;
    }
    if let Some(p) = data.probes {
        config.evidence.config.probes = p;
    }
}

pub fn resolve(command: &Command) -> Result<Resolved, CliError> {
    let common = command.common();
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    // Precedence: flag, then environment, then config file.
    let seed = match common.seed {
        Some(s) => s,
        None => env_seed()?.or(config.seed).unwrap_or(0),
    };
    config.seed = Some(seed);
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    let mut strict_parse = false;
    match command {
        Command::Fit { data, direction, .. } | Command::Compare { data, direction, .. } => {
            apply_data_args(&mut config, data);
            if direction.is_some() {
                config.direction = direction.clone();
            }
            strict_parse = data.strict_parse;
        }
        Command::Nulltest { data, permutations, .. } => {
            apply_data_args(&mut config, data);
            if let Some(p) = permutations {
                config.evidence.permutations = *p;
            }
            strict_parse = data.strict_parse;
        }
        Command::Simulate {
            preset, n, truth, threshold, ..
        } => {
            if let Some(p) = preset {
                config.simulate.preset = p.clone();
            }
            if let Some(n) = n {
                config.simulate.n = *n;
            }
            if truth.is_some() {
                config.simulate.truth = truth.clone();
            }
            if let Some(t) = threshold {
                config.threshold = *t;
            }
        }
        Command::Project { curve, .. } => {
            if curve.is_some() {
                config.infectivity.curve = curve.clone();
            }
        }
    }
    config.validate()?;
    Ok(Resolved {
        config,
        seed,
        strict_parse,
        plots: common.plots,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    library_version: &'static str,
    command: &'a str,
    args: Vec<String>,
    seed: u64,
    config: &'a RunConfig,
    outputs: Vec<String>,
    status: &'static str,
    error: Option<String>,
    wall_time_seconds: f64,
}

fn execute(command: &Command, resolved: &Resolved, out: &mut OutputDir) -> Result<(), CliError> {
    match command {
        Command::Fit { .. } => commands::fit(resolved, out),
        Command::Compare { .. } => commands::compare(resolved, out),
        Command::Nulltest { .. } => commands::nulltest(resolved, out),
        Command::Simulate { .. } => commands::simulate(resolved, out),
        Command::Project { fit, .. } => commands::project(resolved, fit, out),
    }
}

fn run_command(cli: &Cli, args: &[String]) -> Result<(), CliError> {
    let start = Instant::now();
    let command = &cli.command;
    let resolved = resolve(command)?;
    let root = resolved
        .config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("causal-density-out"));
    let mut out = OutputDir::create(&root)?;
    out.write("config.toml", &resolved.config.to_toml())?;
    let result = match command.common().threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))
            .and_then(|pool| pool.install(|| execute(command, &resolved, &mut out))),
        None => execute(command, &resolved, &mut out),
    };
    let manifest = Manifest {
        tool: "causal-density",
        version: env!("CARGO_PKG_VERSION"),
        library_version: causal_density::VERSION,
        command: command.name(),
        args: args.to_vec(),
        seed: resolved.seed,
        config: &resolved.config,
        outputs: out.written().to_vec(),
        status: if result.is_ok() { "ok" } else { "error" },
        error: result.as_ref().err().map(|e| e.to_string()),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    out.json("manifest.json", &manifest)?;
    result
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_owned());
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run_command(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
