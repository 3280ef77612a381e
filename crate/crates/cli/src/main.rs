use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;

use config::ConfigArgs;

/// A usage or configuration error; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "mltm", version, about = "Multilingual topic models with transfer operations")]
struct Cli {
    /// Flat TOML file of experiment settings
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent chains or sweep cells
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per chain
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Infer topic proportions of held-out documents
    Infer {
        #[arg(long)]
        trained: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Language of the documents to read
        #[arg(long)]
        lang: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Crosslingual coherence of trained models
    Eval {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a classifier on one language and test it on the other
    Classify {
        #[arg(long)]
        trained: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Align the topics of two models
    Align {
        model_a: PathBuf,
        model_b: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Document-level versus word-level vote strength of a saved state
    Strength {
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and evaluate over a grid of link or lexicon proportions
    Sweep {
        #[command(flatten)]
        grid: commands::GridArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigArgs::load(p)?,
        None => ConfigArgs::default(),
    };
    let globals = ConfigArgs {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out.clone(),
        ..ConfigArgs::default()
    };
    let resolve = |flags: &ConfigArgs| file.merged(flags)?.merged(&globals);
    match &cli.command {
        Command::Train { cfg } => commands::train(&resolve(cfg)?),
        Command::Infer { trained, input, lang, cfg } => commands::infer(&resolve(cfg)?, trained, input, lang),
        Command::Eval { models, cfg } => commands::eval(&resolve(cfg)?, models),
        Command::Classify { trained, cfg } => commands::classify(&resolve(cfg)?, trained),
        Command::Align { model_a, model_b, cfg } => commands::align(&resolve(cfg)?, model_a, model_b),
        Command::Strength { state, cfg } => commands::strength(&resolve(cfg)?, state),
        Command::Sweep { grid, cfg } => commands::sweep(&resolve(cfg)?, grid),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<Usage>()
            || matches!(
                e.downcast_ref::<mltm::Error>(),
                Some(
                    mltm::Error::Io { .. }
                        | mltm::Error::Parse { .. }
                        | mltm::Error::Hyperparameter(_)
                        | mltm::Error::DuplicateId(_)
                        | mltm::Error::DanglingLinks(_)
                        | mltm::Error::ConflictingLink(_)
                )
            )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 1 })
        }
    }
}
