//! Command-line front end.
//!
//! Option values are resolved in order: explicit flag, `--config` JSON key
//! (flag name with `-` or `_`), built-in default.

mod commands;
mod output;
mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cavity::{CavityParams, ReplicaSum};
use crate::error::Error;

pub use output::Manifest;

#[derive(Parser, Debug)]
#[command(name = "tvcavity", version, about = "Biphoton spectral compression in time-varying cavities")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// JSON file of option values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Samples per axis of the main output grid.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,

    /// Replica tail tolerance used to pick the truncation order.
    #[arg(long, global = true)]
    pub mmax_eps: Option<f64>,

    #[arg(long, global = true, value_enum)]
    pub replica_sum: Option<ReplicaMode>,

    /// Quadrature nodes along the mean time.
    #[arg(long, global = true)]
    pub nodes_mean: Option<usize>,

    /// Quadrature nodes along the time difference.
    #[arg(long, global = true)]
    pub nodes_diff: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Input and output JSI for one input shape; CAR, peak and purities.
    Fig2(commands::Fig2Args),
    /// Purity, FWHM and peak JSI against output mirror reflectivity.
    Fig3(commands::Fig3Args),
    /// Raised-cosine switch with finite rise time.
    Fig4(commands::Fig4Args),
    /// Entry-time center that maximizes output flux.
    OptimizeTs(commands::OptimizeArgs),
    /// Cross-engine and property checks.
    Validate(validate::ValidateArgs),
    /// Heatmap of a grid CSV as a binary PPM.
    Render(commands::RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicaMode {
    Resummed,
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    TimeDomain,
    Analytic,
    Mc,
}

/// Failure categories mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Checks ran and some did not pass.
    Validation(String),
    /// Bad flags, config or input files.
    Usage(String),
    /// Anything else.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) | Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Usage(_) => "usage",
            Failure::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter { .. }
            | Error::NotContained { .. }
            | Error::UnsupportedQuadrature(_)
            | Error::InsufficientTimeRange { .. }
            | Error::SupportViolation { .. }
            | Error::ProfileNotSettled { .. }
            | Error::Parse { .. }
            | Error::Json(_) => Failure::Usage(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Option lookup across flags, config file and defaults.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    config: Map<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&PathBuf>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => Ok(Self {
                config: map.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect(),
            }),
            Ok(_) => Err(Failure::Usage("config must be a JSON object".into())),
            Err(e) => Err(Failure::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    pub fn from_map(config: Map<String, Value>) -> Self {
        Self { config }
    }

    pub fn has(&self, key: &str) -> bool {
        self.config.contains_key(key)
    }

    pub fn lookup<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.config.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.lookup(key)?.unwrap_or(default)),
        }
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.lookup(key),
        }
    }
}

/// Replica-sum settings recorded in every manifest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub mode: ReplicaMode,
    pub eps: f64,
    pub max_bounce: usize,
    pub tail_bound: f64,
}

impl Truncation {
    pub fn resolve(mode: ReplicaMode, eps: f64, cavity: &CavityParams) -> CliResult<Self> {
        let max_bounce = cavity.max_bounce_for_tolerance(eps)?;
        Ok(Self {
            mode,
            eps,
            max_bounce,
            tail_bound: match mode {
                ReplicaMode::Resummed => 0.0,
                ReplicaMode::Truncated => cavity.tail_bound(max_bounce),
            },
        })
    }

    pub fn sum(&self) -> ReplicaSum {
        match self.mode {
            ReplicaMode::Resummed => ReplicaSum::Resummed,
            ReplicaMode::Truncated => ReplicaSum::Truncated {
                max_bounce: self.max_bounce,
            },
        }
    }
}

pub const DEFAULT_MMAX_EPS: f64 = 1e-6;

/// Runs a parsed command line; the error carries the exit code.
pub fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::load(cli.global.config.as_ref())?;
    let threads: Option<usize> = settings.pick_opt(cli.global.threads, "threads")?;
    configure_threads(threads)?;
    let ctx = commands::Context::new(&cli.global, &settings)?;
    match cli.command {
        Command::Fig2(args) => commands::fig2(&ctx, &settings, args),
        Command::Fig3(args) => commands::fig3(&ctx, &settings, args),
        Command::Fig4(args) => commands::fig4(&ctx, &settings, args),
        Command::OptimizeTs(args) => commands::optimize_ts(&ctx, &settings, args),
        Command::Validate(args) => validate::validate(&ctx, &settings, args),
        Command::Render(args) => commands::render(&ctx, &settings, args),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        // a second initialization in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    Ok(())
}
