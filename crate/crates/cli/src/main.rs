//! `speechprint`: extract features, train and evaluate detectors, predict
//! on audio files and export bicoherence or mel-spectrogram images.
//!
//! Exit codes: 0 success, 1 failure or partial failure, 2 configuration or
//! usage error.

mod commands;
mod config;
mod error;
mod pipeline;
mod report;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use speechprint::classical_ml::{AlgoKind, Scenario};
use speechprint::synth::SynthConfig;

use commands::{Input, Outcome, RelicKind};
use config::{Overrides, PipelineConfig};
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "speechprint", version, about = "Synthetic speech detection from bicoherence and cepstral features")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// binary or multi.
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    /// Classical algorithm, e.g. rus_boosted_trees.
    #[arg(long, global = true)]
    algo: Option<AlgoKind>,
    /// Keep exactly N training rows per class.
    #[arg(long, global = true)]
    balance: Option<usize>,
    /// Cross-validation folds for classical training; 0 skips CV.
    #[arg(long, global = true)]
    kfold: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature row per admitted clip of a manifest.
    Extract {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a classical model or the CRNN and write a run report.
    Train {
        #[command(flatten)]
        input: InputArgs,
        /// Train the CRNN on mel-spectrogram images (needs --manifest).
        #[arg(long)]
        crnn: bool,
        #[arg(short, long)]
        out: PathBuf,
        /// Defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a trained model on labeled data.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Also write the report here; it always goes to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print one JSON line per audio file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Export a bicoherence or mel-spectrogram grid as PGM and CSV.
    Relics {
        audio: PathBuf,
        #[arg(long, value_enum)]
        kind: RelicKind,
        /// Output path prefix; `.pgm` and `.csv` are appended.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the seeded synthetic corpus and its manifest.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        clips: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 4.5)]
        duration: f64,
        #[arg(long, default_value_t = 8000)]
        sample_rate: u32,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Feature CSV from `extract`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Manifest of `path,label` lines.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl InputArgs {
    fn input(&self) -> Input<'_> {
        match (&self.features, &self.manifest) {
            (Some(f), _) => Input::Features(f),
            (None, Some(m)) => Input::Manifest(m),
            (None, None) => unreachable!("clap requires one input"),
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    let mut cfg = PipelineConfig::load(g.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: g.seed,
        scenario: g.scenario,
        algo: g.algo,
        balance: g.balance,
        kfold: g.kfold,
    });
    cfg.validate()?;
    match cli.command {
        Command::Extract { manifest, out } => commands::extract(&manifest, &out, &cfg),
        Command::Train {
            input,
            crnn,
            out,
            report,
        } => {
            if crnn {
                let Some(manifest) = &input.manifest else {
                    return Err(CliError::Config("--crnn trains on audio and needs --manifest".into()));
                };
                commands::train_crnn(manifest, &out, report.as_deref(), &cfg)?;
            } else {
                commands::train_classical(input.input(), &out, report.as_deref(), &cfg)?;
            }
            Ok(Outcome::Complete)
        }
        Command::Eval { model, input, report } => {
            let r = commands::eval(&model, input.input(), report.as_deref(), &cfg, g.config.is_some())?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(Outcome::Complete)
        }
        Command::Predict { model, files } => {
            commands::predict(&model, &files, &cfg, g.config.is_some(), io::stdout().lock())
        }
        Command::Relics { audio, kind, out } => {
            let (pgm, csv) = commands::relics(&audio, kind, &out, &cfg)?;
            log::info!("wrote {} and {}", pgm.display(), csv.display());
            Ok(Outcome::Complete)
        }
        Command::Synth {
            dir,
            clips,
            classes,
            duration,
            sample_rate,
        } => {
            commands::synth(
                &dir,
                &SynthConfig {
                    n_clips: clips,
                    classes,
                    sample_rate,
                    duration_secs: duration,
                    seed: cfg.seed,
                },
            )?;
            Ok(Outcome::Complete)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
