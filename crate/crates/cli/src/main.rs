//! `octafaz`: batch OCT-A vessel segmentation and FAZ quantification.
//!
//! Exit codes: 0 success, 1 some eyes failed (see `exceptions.log`),
//! 2 configuration or IO failure.

mod commands;
mod config;
mod error;
mod manifest;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::PredKind;
use crate::config::{Preset, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "octafaz", version, about = "OCT-A vessel segmentation and FAZ quantification")]
struct Cli {
    /// `key=value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// prototype2mm300, optovue3mm304, zeiss3mm245 or custom.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// `eye_id,cohort,image_path,manual_mask_path[,roi_path]` lines.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Map,
    Mask,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split-half training: two models, loss log and one map per eye.
    Train,
    /// Confidence maps from a saved model.
    Segment {
        #[arg(long)]
        model: PathBuf,
    },
    /// Metrics CSV and overlays from manual masks and, optionally, maps.
    Quantify {
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Pixel agreement of predictions against the manual masks.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "map")]
        kind: Kind,
    },
    /// Cohort report from one or more metrics CSVs.
    Stats { csv: Vec<PathBuf> },
    /// Synthetic cohort with truth masks and a manifest.
    Synth,
    /// Quantify both raters, then the cohort report.
    Report {
        #[arg(long)]
        maps: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<usize> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &cli.preset {
        let p = Preset::parse(name).ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?;
        cfg = cfg.with_preset(p)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    let (m, out) = (cli.manifest.as_deref(), cfg.out_dir.as_path());
    match cli.command {
        Command::Train => commands::train(&cfg, m, out),
        Command::Segment { model } => commands::segment(&cfg, m, &model, out),
        Command::Quantify { maps } => commands::quantify(&cfg, m, maps.as_deref(), out),
        Command::Evaluate { pred, kind } => {
            let kind = match kind {
                Kind::Map => PredKind::Map,
                Kind::Mask => PredKind::Mask,
            };
            commands::evaluate(&cfg, m, &pred, kind, out)
        }
        Command::Stats { csv } => commands::stats(&csv, out),
        Command::Synth => commands::synth(&cfg, out),
        Command::Report { maps } => commands::report(&cfg, m, &maps, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} eye(s) failed; see exceptions.log");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
