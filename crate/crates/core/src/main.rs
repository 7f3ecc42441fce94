//! Command-line front end. Exit codes: 0 success, 1 validation error,
//! 2 runtime error, 3 incomplete/aborted run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pamfract::config::{ConfigError, ExperimentConfig, RunKind};
use pamfract::runner::{run, RunError};

#[derive(Parser)]
#[command(
    name = "pamfract",
    version,
    about = "Parabolic Anderson equation simulation and valley-fractality analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML key = value sections, or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (overrides config and PAMFRACT_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectories and write snapshots (binary + CSV).
    Simulate,
    /// Extract valley level sets from simulated trajectories.
    Valleys,
    /// Apply the stretch map to a stored set file.
    Stretch,
    /// Estimate the macroscopic Hausdorff dimension of a set.
    Dim,
    /// Monte Carlo tail probability curves.
    Tails,
    /// Moment Lyapunov exponent slopes.
    Moments,
    /// Two-sample test of the convolution identity.
    Convtest,
    /// FKG positive-association check.
    Fkg,
    /// Windowed-noise proxy accuracy sweep.
    Proxy,
    /// Materialize a synthetic benchmark set.
    XiGen,
    /// Validate a config without running anything.
    Validate,
}

impl Command {
    fn kind(&self) -> RunKind {
        match self {
            Command::Simulate => RunKind::Simulate,
            Command::Valleys => RunKind::Valleys,
            Command::Stretch => RunKind::Stretch,
            Command::Dim => RunKind::Dim,
            Command::Tails => RunKind::Tails,
            Command::Moments => RunKind::Moments,
            Command::Convtest => RunKind::Convtest,
            Command::Fkg => RunKind::Fkg,
            Command::Proxy => RunKind::Proxy,
            Command::XiGen => RunKind::XiGen,
            Command::Validate => RunKind::Validate,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return ExitCode::from(1);
        }
    };
    let mut config = match ExperimentConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let kind = cli.command.kind();
    if kind != RunKind::Validate && config.run.kind != kind {
        // The subcommand names the pipeline; a mismatched config kind is a
        // validation error rather than a silent override.
        if config.run.kind == RunKind::Validate {
            config.run.kind = kind;
        } else {
            eprintln!(
                "error: config kind = {} does not match subcommand {}",
                config.run.kind, kind
            );
            return ExitCode::from(1);
        }
    }
    if let Some(seed) = cli.seed {
        config.run.master_seed = seed;
    }
    let env_workers = std::env::var("PAMFRACT_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(w) = cli.workers.or(env_workers) {
        config.run.workers = Some(w);
    }

    let (errors, warnings) = config.validate();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        return ExitCode::from(1);
    }
    if kind == RunKind::Validate {
        println!("config valid ({} warnings)", warnings.len());
        return ExitCode::SUCCESS;
    }

    let out_dir = cli
        .out
        .or_else(|| config.run.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    match run(&config, &out_dir) {
        Ok(manifest) => {
            println!(
                "done: kind={} outputs={} trajectories_ok={} diverged={} -> {}",
                manifest.kind,
                manifest.outputs.len(),
                manifest.trajectories_ok,
                manifest.trajectories_diverged,
                out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(RunError::Config(ConfigError::Invalid { issues })) => {
            for i in issues {
                eprintln!("error: {i}");
            }
            ExitCode::from(1)
        }
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(RunError::Setup(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(RunError::Aborted { out_dir, message }) => {
            eprintln!("error: aborted: {message} (incomplete marker left in {})", out_dir.display());
            ExitCode::from(3)
        }
    }
}
