//! `ssal`: generate data, train, replay drifting streams with active
//! learning, and run the ablation, noise and scaling studies.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssal_core::selection::SelectorKind;
use ssal_core::Result;

use commands::{output_dir, write_run_record, Command};
use config::{ExperimentConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "ssal", version, about = "Semi-supervised active learning under concept drift")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; every section is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Oracle labels per month.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// multi_criteria | margin_only | lp_only | low_confidence_only | random
    #[arg(long, global = true)]
    selector: Option<String>,
    #[arg(long, global = true)]
    label_ratio: Option<f64>,
    /// Output directory [default: $SSAL_OUT/<command>, or runs/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic drifting dataset.
    Synth,
    /// Initial semi-supervised training; writes checkpoints and reports.
    Train,
    /// Monthly test-then-train replay with active learning.
    Stream,
    /// Every selector at every budget on shared seeds.
    Ablate,
    /// Runtime and operation counts against pool size.
    Bench,
    /// Stream replay over a sweep of initial label-noise rates.
    Noise,
    /// Summarize a finished run directory.
    Report {
        /// Directory containing `report.json`.
        input: PathBuf,
    },
}

impl Cmd {
    fn kind(&self) -> Command {
        match self {
            Cmd::Synth => Command::Synth,
            Cmd::Train => Command::Train,
            Cmd::Stream => Command::Stream,
            Cmd::Ablate => Command::Ablate,
            Cmd::Bench => Command::Bench,
            Cmd::Noise => Command::Noise,
            Cmd::Report { .. } => Command::Report,
        }
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let selector = common.selector.as_deref().map(str::parse::<SelectorKind>).transpose()?;
    cfg.apply(&Overrides {
        seed: common.seed,
        budget: common.budget,
        selector,
        label_ratio: common.label_ratio,
        out: common.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve(&cli.common)?;
    let kind = cli.command.kind();
    let out = output_dir(&cfg, kind);
    match &cli.command {
        Cmd::Synth => commands::synth(&cfg, &out)?,
        Cmd::Train => commands::train(&cfg, &out)?,
        Cmd::Stream => commands::stream(&cfg, &out)?,
        Cmd::Ablate => commands::ablate(&cfg, &out)?,
        Cmd::Bench => commands::bench_cmd(&cfg, &out)?,
        Cmd::Noise => commands::noise(&cfg, &out)?,
        Cmd::Report { input } => commands::report_cmd(input, &out)?,
    }
    write_run_record(kind, &cfg, &out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            eprintln!("outputs in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
