use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scosara_cli::{cmd_plot, cmd_recover, cmd_sweep, cmd_train, ExperimentConfig};
use scosara_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "scosara", version, about = "Learned structured subsampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; built-in defaults when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the joint sampler at `train.budget`
    Train(Common),
    /// CRB of every method across `sweep.budgets`
    Sweep(Common),
    /// Sparse recovery of the scatterer-pair scenarios
    Recover {
        #[command(flatten)]
        common: Common,
        /// Use a selection file instead of training, e.g. `scosara=out/selection.txt`
        #[arg(long = "selection", value_name = "METHOD=PATH")]
        selections: Vec<String>,
    },
    /// SVG charts from a sweep CSV
    Plot {
        #[command(flatten)]
        common: Common,
        /// Sweep CSV; defaults to `<out>/sweep.csv`
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            cmd_train(&cfg, &out)?;
        }
        Command::Sweep(c) => {
            let (cfg, out) = load(&c)?;
            cmd_sweep(&cfg, &out)?;
        }
        Command::Recover { common, selections } => {
            let (cfg, out) = load(&common)?;
            let parsed = selections
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(m, p)| (m.to_string(), PathBuf::from(p)))
                        .ok_or_else(|| Error::InvalidArgument(format!("expected METHOD=PATH, got `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            cmd_recover(&cfg, &out, &parsed)?;
        }
        Command::Plot { common, input } => {
            let (cfg, out) = load(&common)?;
            cmd_plot(&cfg, &out, input.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
