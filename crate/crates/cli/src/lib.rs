//! Batch driver for the ctgca pipeline: phantom cohorts, preprocessing,
//! training and the validation report bundle.

mod commands;
mod io;
mod manifest;
pub mod svg;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::validate::AGE_BANDS;
pub use io::{parse_cohort_csv, write_cohort_csv};
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "ctgca",
    version,
    about = "Global cortical atrophy scoring on CT"
)]
pub struct Cli {
    /// Master seed (cohort generation, data split).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort. Config: cohort spec JSON.
    Phantom {
        /// Uniform cohort size when no config is given.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Brain extraction, registration and feature extraction. Config: registration JSON.
    Pipeline {
        /// Directory of .nii scans.
        scans: PathBuf,
        /// Template NIfTI (defaults to the built-in phantom template).
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Fit the predictor on the train split. Config: {"lambdas": [...], "seed": n}.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        /// Comma-separated ridge penalties.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Rater to train against when the sheet holds several.
        #[arg(long)]
        rater: Option<String>,
    },
    /// Agreement and covariate analyses on the test split.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        /// Second rater's sheet (may cover a subset of scans).
        #[arg(long)]
        ratings2: Option<PathBuf>,
        /// Demographics: scan_id,cohort,age,sex,amt_score,ocs_tasks_impaired.
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long)]
        rater: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or inputs. Exit 2.
    Usage(String),
    /// Failure while running. Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ctgca::Error> for CliError {
    fn from(e: ctgca::Error) -> Self {
        match e {
            ctgca::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub(crate) fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Run a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| usage("--out <dir> is required"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(runtime)?;
    let config = match &cli.config {
        Some(p) => Some(io::read_text(p)?),
        None => None,
    };
    let ctx = commands::Context {
        out,
        seed: cli.seed,
        config,
        pool: &pool,
    };
    match &cli.command {
        Command::Phantom { n } => commands::phantom::run(&ctx, *n),
        Command::Pipeline { scans, template } => {
            commands::pipeline::run(&ctx, scans, template.as_deref())
        }
        Command::Train {
            features,
            ratings,
            lambdas,
            rater,
        } => commands::train::run(
            &ctx,
            features,
            ratings,
            lambdas.as_deref(),
            rater.as_deref(),
        ),
        Command::Validate {
            model,
            split,
            features,
            ratings,
            ratings2,
            cohort,
            rater,
        } => commands::validate::run(
            &ctx,
            &commands::validate::Inputs {
                model,
                split,
                features,
                ratings,
                ratings2: ratings2.as_deref(),
                cohort: cohort.as_deref(),
                rater: rater.as_deref(),
            },
        ),
    }
}
