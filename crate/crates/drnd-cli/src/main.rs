use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drnd_core::error::{DrndError, Result};

use drnd_cli::commands;
use drnd_cli::config::{self, parse_seed_list};
use drnd_cli::manifest::RunManifest;
use drnd_cli::{EXIT_CHECK_FAILURE, EXIT_PASS, EXIT_USAGE, OUT_ROOT_ENV};

/// Experiment runner for the distributional distillation bonus suite.
#[derive(Parser)]
#[command(name = "drnd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML config file; omit to run with defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seed list overriding the config's seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; defaults to $DRND_OUT_ROOT/<subcommand> (or
    /// ./out/<subcommand> when the variable is unset).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator oracle suite (mean ratio, variance routes,
    /// linear-model MSE identity).
    VerifyLemmas(CommonArgs),
    /// One-hot distribution-shape experiment and initial-spread sweep.
    Inconsistency(CommonArgs),
    /// 2-D bonus landscape before/after training on a mixture dataset.
    Heatmap(CommonArgs),
    /// On-policy training on a toy hard-exploration environment.
    TrainOnline(CommonArgs),
    /// Offline dataset generation plus penalized actor-critic training.
    TrainOffline(CommonArgs),
}

fn read_config_text(path: &Option<PathBuf>) -> Result<String> {
    match path {
        None => Ok(String::new()),
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| DrndError::Usage(format!("cannot read config {}: {e}", p.display()))),
    }
}

fn out_dir(args: &CommonArgs, subcommand: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "out".into());
        PathBuf::from(root).join(subcommand)
    })
}

fn seeds_override(args: &CommonArgs) -> Result<Option<Vec<u64>>> {
    args.seeds.as_deref().map(parse_seed_list).transpose()
}

fn dispatch(cmd: &Command) -> Result<RunManifest> {
    match cmd {
        Command::VerifyLemmas(args) => {
            let mut cfg: config::VerifyLemmasConfig =
                config::parse_toml(&read_config_text(&args.config)?)?;
            if let Some(s) = seeds_override(args)? {
                cfg.seeds = s;
            }
            commands::verify_lemmas::run(&cfg, &out_dir(args, "verify-lemmas"))
        }
        Command::Inconsistency(args) => {
            let mut cfg: config::InconsistencyCliConfig =
                config::parse_toml(&read_config_text(&args.config)?)?;
            if let Some(s) = seeds_override(args)? {
                cfg.seeds = s;
            }
            commands::inconsistency::run(&cfg, &out_dir(args, "inconsistency"))
        }
        Command::Heatmap(args) => {
            let mut cfg: config::HeatmapCliConfig =
                config::parse_toml(&read_config_text(&args.config)?)?;
            if let Some(s) = seeds_override(args)? {
                cfg.seeds = s;
            }
            commands::heatmap::run(&cfg, &out_dir(args, "heatmap"))
        }
        Command::TrainOnline(args) => {
            let mut cfg: config::TrainOnlineCliConfig =
                config::parse_toml(&read_config_text(&args.config)?)?;
            if let Some(s) = seeds_override(args)? {
                cfg.seeds = s;
            }
            commands::train_online::run(&cfg, &out_dir(args, "train-online"))
        }
        Command::TrainOffline(args) => {
            let mut cfg: config::TrainOfflineCliConfig =
                config::parse_toml(&read_config_text(&args.config)?)?;
            if let Some(s) = seeds_override(args)? {
                cfg.seeds = s;
            }
            commands::train_offline::run(&cfg, &out_dir(args, "train-offline"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(manifest) => {
            for c in &manifest.checks {
                println!(
                    "[{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            for e in &manifest.errors {
                eprintln!("error: {e}");
            }
            if manifest.passed {
                ExitCode::from(EXIT_PASS as u8)
            } else {
                ExitCode::from(EXIT_CHECK_FAILURE as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                DrndError::Config(_) | DrndError::Usage(_) => ExitCode::from(EXIT_USAGE as u8),
                _ => ExitCode::from(EXIT_CHECK_FAILURE as u8),
            }
        }
    }
}
