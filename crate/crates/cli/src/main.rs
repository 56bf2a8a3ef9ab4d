//! `maga`: gradient checking, toy training, evaluation, ablation sweeps,
//! data synthesis and inference for the MAGA matting network.
//!
//! Exit status: 0 on success, 1 on a validation failure (bad arguments,
//! configuration or data, or a failed check), 2 on a filesystem failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use config::RunConfig;
use error::{CliResult, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(name = "maga", version, about = "MAGA matting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one key; repeatable, applied in order after the file.
    #[arg(long = "set", global = true, value_name = "K=V")]
    set: Vec<String>,

    /// Output directory [default: runs/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for initialization and data synthesis; overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Finite-difference checks of every op and of the whole network.
    Gradcheck,
    /// Train on synthesized or manifest data; writes a loss log and checkpoint.
    Train,
    /// Score a checkpoint, or a reference source, on a dataset manifest.
    Eval,
    /// Sweep kernel size, branch set or MAGA block count.
    Ablate,
    /// Write a procedural dataset with a manifest.
    Synth,
    /// Predict one alpha matte from an image and a trimap.
    Infer,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gradcheck => "gradcheck",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Synth => "synth",
            Command::Infer => "infer",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set, cli.seed)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    commands::create_dir(&out)?;
    let snapshot = cfg.write_snapshot(cli.command.name(), &out)?;
    info!("resolved configuration written to {}", snapshot.display());
    match cli.command {
        Command::Gradcheck => commands::gradcheck::run(&cfg, &out),
        Command::Train => commands::train::run(&cfg, &out),
        Command::Eval => commands::eval::run(&cfg, &out),
        Command::Ablate => commands::ablate::run(&cfg, &out),
        Command::Synth => commands::synth::run(&cfg, &out),
        Command::Infer => commands::infer::run(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
