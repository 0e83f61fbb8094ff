//! `sitadda`: source training, adversarial adaptation, sweeps, label-free
//! selection, perturbation, evaluation and the synthetic benchmark.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "sitadda", version, about = "Selective-subnetwork adversarial domain adaptation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Independent runs executed concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Supervised training on the paired source data.
    TrainSource,
    /// Adversarial adaptation of a source checkpoint to the target data.
    Adapt,
    /// Adaptation over every (learning rate, schedule) cell.
    Sweep,
    /// Ensemble-uncertainty selection of schedule and learning rate.
    Autoselect,
    /// Apply a synthetic acquisition shift to a directory of images.
    Perturb(commands::PerturbArgs),
    /// Compare predictions with references.
    Evaluate(commands::EvaluateArgs),
    /// Run the synthetic end-to-end benchmark.
    Synthbench(commands::SynthbenchArgs),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Core(sitadda::Error),
}

impl CliError {
    /// 2 configuration, 3 data, 4 divergence or exclusion.
    pub fn exit_code(&self) -> u8 {
        use sitadda::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Index { .. } => 2,
                E::Divergence { .. } | E::SelectionFailure => 4,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<sitadda::Error> for CliError {
    fn from(e: sitadda::Error) -> Self {
        CliError::Core(e)
    }
}

/// Settings shared by every subcommand after merging flags into the file.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Context {
    fn new(global: &GlobalArgs) -> Result<Self, CliError> {
        let config = match &global.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let seed = global
            .seed
            .or(config.seed)
            .ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config)".into()))?;
        let out = global.out.clone().or_else(|| config.paths.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let jobs = global.jobs.or(config.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        output::ensure_dir(&out)?;
        Ok(Context { config, seed, out, jobs })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::TrainSource => commands::train_source(&ctx),
        Command::Adapt => commands::adapt(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Autoselect => commands::autoselect(&ctx),
        Command::Perturb(a) => commands::perturb(&ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
        Command::Synthbench(a) => commands::synthbench(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sitadda: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
