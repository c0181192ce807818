mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qdoe::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_config() => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qdoe", version, about = "Quantization-based designs, estimators and HSIC screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true, default_value = "qdoe.json")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reuse one pool and quantizer across repetitions.
    #[arg(long, global = true)]
    shared_quantizer: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write one design per scheme and size.
    Sample,
    /// Repeat the estimator and summarize its spread.
    Estimate,
    /// HSIC independence screening of the input groups.
    Hsic,
    /// Fit and save a quantizer of the pool.
    Quantize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let (mut cfg, base) = ExperimentConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    } else if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    cfg.shared_quantizer |= cli.shared_quantizer;
    log::info!("config {} hash {}", cli.config.display(), cfg.hash());

    let files = match cli.command {
        Command::Sample => commands::sample(&cfg, &base)?,
        Command::Estimate => commands::estimate(&cfg, &base)?,
        Command::Hsic => commands::hsic(&cfg, &base)?,
        Command::Quantize => commands::quantize(&cfg, &base)?,
    };
    commands::write_all(&cfg.output_dir, &files)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QDOE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qdoe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
