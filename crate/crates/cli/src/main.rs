use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use speech_screen::features::ExtractionConfig;
use speech_screen::synth::CorpusSpec;
use speech_screen_cli::{
    cmd_correlate, cmd_evaluate, cmd_extract, cmd_importance, cmd_synth, parse_task, render_json,
    write_output, write_table, CliError, EvaluateArgs, ModelChoice,
};

/// Speech-pattern feature extraction and screening models.
#[derive(Debug, Parser)]
#[command(name = "speech-screen", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for fold assignment, forests and corpus generation.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 50.0)]
    frame_ms: f64,
    #[arg(long, global = true, default_value_t = 25.0)]
    hop_ms: f64,
    /// Shortest silent run counted as a pause, in seconds.
    #[arg(long, global = true, default_value_t = 0.3)]
    min_pause_s: f64,
    /// Frames quieter than the loudest frame by more than this many dB are silent.
    #[arg(long, global = true, default_value_t = 25.0)]
    silence_db: f64,
    /// Skip recordings that fail to load or extract instead of aborting.
    #[arg(long, global = true)]
    skip_bad: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract the feature table for every recording in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature CSV destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate a model and write the evaluation report.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation or feature-importance documents.
    Report {
        #[command(subcommand)]
        what: ReportKind,
    },
    /// Generate a labeled synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        n_clips: usize,
        #[arg(long, default_value_t = 0.5)]
        balance: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Upper bound on planted pauses per clip; 0 disables pauses.
        #[arg(long, default_value_t = 3)]
        max_pauses: usize,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// classify or regress.
    #[arg(long, default_value = "classify")]
    task: String,
    /// gbm, rf, adaboost or gnb.
    #[arg(long, default_value = "gbm")]
    model: String,
}

#[derive(Debug, Subcommand)]
enum ReportKind {
    /// Pearson correlation between every pair of features.
    Correlate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-decrease-in-impurity ranking of a model fit on all recordings.
    Importance {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Number of features listed.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    fn extraction_config(&self) -> Result<ExtractionConfig, CliError> {
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0 && self.hop_ms <= self.frame_ms) {
            return Err(CliError::Usage(format!(
                "need 0 < --hop-ms <= --frame-ms, got hop {} and frame {}",
                self.hop_ms, self.frame_ms
            )));
        }
        if !(self.min_pause_s >= 0.0 && self.silence_db > 0.0) {
            return Err(CliError::Usage(
                "--min-pause-s must be >= 0 and --silence-db > 0".into(),
            ));
        }
        let mut config = ExtractionConfig::default().with_framing(self.frame_ms, self.hop_ms);
        config.prosody.min_pause_s = self.min_pause_s;
        config.prosody.silence_db_below_peak = self.silence_db;
        Ok(config)
    }
}

impl ModelArgs {
    fn resolve(&self, folds: usize, seed: u64) -> Result<EvaluateArgs, CliError> {
        Ok(EvaluateArgs {
            task: parse_task(&self.task)?,
            model: ModelChoice::parse(&self.model)?,
            folds,
            seed,
        })
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Extract { manifest, out } => {
            let config = common.extraction_config()?;
            let outcome = cmd_extract(&manifest, &config, common.skip_bad)?;
            for (id, reason) in &outcome.skipped {
                eprintln!("skipped {id}: {reason}");
            }
            write_table(&outcome.table, out.as_deref())
                .with_context(|| "writing feature table")?;
        }
        Command::Evaluate {
            features,
            manifest,
            model,
            folds,
            out,
        } => {
            let args = model.resolve(folds, common.seed)?;
            let report = cmd_evaluate(&features, &manifest, &args)?;
            write_output(out.as_deref(), &render_json(&report)?)?;
        }
        Command::Report { what } => match what {
            ReportKind::Correlate { features, out } => {
                let report = cmd_correlate(&features)?;
                write_output(out.as_deref(), &render_json(&report)?)?;
            }
            ReportKind::Importance {
                features,
                manifest,
                model,
                top,
                out,
            } => {
                let args = model.resolve(0, common.seed)?;
                let report = cmd_importance(&features, &manifest, &args, Some(top))?;
                write_output(out.as_deref(), &render_json(&report)?)?;
            }
        },
        Command::Synth {
            out_dir,
            n_clips,
            balance,
            separation,
            sample_rate,
            max_pauses,
        } => {
            let spec = CorpusSpec {
                n_clips,
                class_balance: balance,
                separation,
                seed: common.seed,
                sample_rate,
                max_pauses,
            };
            let manifest = cmd_synth(&spec, &out_dir).map_err(|e| match e {
                CliError::Synth(speech_screen::synth::SynthError::InvalidSpec(msg)) => {
                    CliError::Usage(msg)
                }
                other => other,
            })?;
            eprintln!("wrote {} clips; manifest {}", n_clips, manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
