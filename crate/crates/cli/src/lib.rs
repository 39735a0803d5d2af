//! Pipeline commands behind the `speech-screen` binary.
//!
//! Each command reads and writes plain files (manifest CSV, feature CSV,
//! JSON reports) so runs can be inspected and diffed.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use speech_screen::audio_io::{load_wav, AudioError};
use speech_screen::eval::{
    cross_validate, pearson_matrix, rank_features, EvalError, EvalReport, LabeledDataset, ModelSpec,
    RankedFeature, Task,
};
use speech_screen::features::{extract_features, ExtractionConfig, FeatureVector, SCHEMA_VERSION};
use speech_screen::models::{AdaBoostParams, ForestParams, GbmParams, ModelError};
use speech_screen::synth::{synth_corpus, CorpusSpec, SynthError};
use speech_screen::table::{FeatureTable, Manifest, TableError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("duplicate id {0:?} in manifest")]
    DuplicateId(String),
    #[error("recording {id:?}: file not found: {}", path.display())]
    FileNotFound { id: String, path: PathBuf },
    #[error("recording {id:?}: {source}")]
    Recording {
        id: String,
        #[source]
        source: AudioError,
    },
    #[error("feature table and manifest ids differ: {0}")]
    IdMismatch(String),
    #[error("no recordings could be extracted")]
    NothingExtracted,
    #[error(transparent)]
    Table(TableError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::DuplicateId(id) => CliError::DuplicateId(id),
            other => CliError::Table(other),
        }
    }
}

impl CliError {
    /// 1 for usage errors, 2 for bad or unreadable data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Gbm,
    Rf,
    AdaBoost,
    Gnb,
}

impl ModelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gbm" => Ok(Self::Gbm),
            "rf" => Ok(Self::Rf),
            "adaboost" => Ok(Self::AdaBoost),
            "gnb" => Ok(Self::Gnb),
            other => Err(CliError::Usage(format!(
                "unknown model {other:?}; expected gbm, rf, adaboost or gnb"
            ))),
        }
    }

    pub fn spec(self) -> ModelSpec {
        match self {
            Self::Gbm => ModelSpec::Gbm(GbmParams::default()),
            Self::Rf => ModelSpec::RandomForest(ForestParams::default()),
            Self::AdaBoost => ModelSpec::AdaBoost(AdaBoostParams::default()),
            Self::Gnb => ModelSpec::GaussianNb,
        }
    }
}

pub fn parse_task(s: &str) -> Result<Task> {
    match s {
        "classify" => Ok(Task::Classify),
        "regress" => Ok(Task::Regress),
        other => Err(CliError::Usage(format!(
            "unknown task {other:?}; expected classify or regress"
        ))),
    }
}

/// Writes to `path`, or stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, contents: &[u8]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, contents)?,
        _ => std::io::stdout().lock().write_all(contents)?,
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct ExtractOutcome {
    pub table: FeatureTable,
    /// Ids left out under `skip_bad`, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Extracts one feature row per manifest recording, in manifest order.
pub fn cmd_extract(
    manifest_path: &Path,
    config: &ExtractionConfig,
    skip_bad: bool,
) -> Result<ExtractOutcome> {
    let manifest = Manifest::read(manifest_path)?;
    let results: Vec<Result<FeatureVector>> = manifest
        .rows
        .par_iter()
        .map(|row| {
            let path = manifest.resolve(row, manifest_path);
            if !path.is_file() {
                return Err(CliError::FileNotFound {
                    id: row.id.clone(),
                    path,
                });
            }
            let recording = |source| CliError::Recording {
                id: row.id.clone(),
                source,
            };
            let signal = load_wav(&path).map_err(recording)?;
            extract_features(&signal, config).map_err(recording)
        })
        .collect();

    let mut outcome = ExtractOutcome::default();
    for (row, result) in manifest.rows.iter().zip(results) {
        match result {
            Ok(v) => outcome.table.push(row.id.clone(), v),
            Err(e) if skip_bad => outcome.skipped.push((row.id.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if outcome.table.is_empty() && !manifest.rows.is_empty() {
        return Err(CliError::NothingExtracted);
    }
    Ok(outcome)
}

/// Pairs feature rows with manifest labels. The two files must list the
/// same ids; rows follow the feature table's order.
pub fn join_dataset(table: &FeatureTable, manifest: &Manifest) -> Result<LabeledDataset> {
    let by_id: HashMap<&str, (u8, f64)> = manifest
        .rows
        .iter()
        .map(|r| (r.id.as_str(), (r.label, r.score)))
        .collect();
    let missing: Vec<&str> = table
        .ids
        .iter()
        .map(String::as_str)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let table_ids: HashSet<&str> = table.ids.iter().map(String::as_str).collect();
    let extra: Vec<&str> = manifest.ids().filter(|id| !table_ids.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("not in manifest: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("not in features: {}", extra.join(", ")));
        }
        return Err(CliError::IdMismatch(parts.join("; ")));
    }
    let (labels, scores) = table.ids.iter().map(|id| by_id[id.as_str()]).unzip();
    Ok(LabeledDataset::new(table.ids.clone(), table.to_matrix(), labels, scores)?)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub task: Task,
    pub model: ModelChoice,
    pub folds: usize,
    pub seed: u64,
}

pub fn cmd_evaluate(features: &Path, manifest: &Path, args: &EvaluateArgs) -> Result<EvalReport> {
    if args.task == Task::Regress && args.model != ModelChoice::Gbm {
        return Err(CliError::Usage("regression is only supported with --model gbm".into()));
    }
    let table = FeatureTable::read(features)?;
    let manifest = Manifest::read(manifest)?;
    let dataset = join_dataset(&table, &manifest)?;
    Ok(cross_validate(&dataset, args.task, &args.model.spec(), args.folds, args.seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub report: &'static str,
    pub schema_version: u32,
    pub n_samples: usize,
    pub names: Vec<String>,
    /// Row-major, in `names` order.
    pub matrix: Vec<Vec<f64>>,
    pub constant_features: Vec<String>,
}

pub fn cmd_correlate(features: &Path) -> Result<CorrelationReport> {
    let table = FeatureTable::read(features)?;
    let corr = pearson_matrix(&table.to_matrix())?;
    Ok(CorrelationReport {
        report: "correlation",
        schema_version: SCHEMA_VERSION,
        n_samples: table.len(),
        names: corr.names,
        matrix: corr.values,
        constant_features: corr.constant_features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub report: &'static str,
    pub schema_version: u32,
    pub model: &'static str,
    pub task: Task,
    pub seed: u64,
    pub n_samples: usize,
    /// Top features by MDI, descending. Scores over all features sum to 1.
    pub features: Vec<RankedFeature>,
}

pub fn cmd_importance(
    features: &Path,
    manifest: &Path,
    args: &EvaluateArgs,
    top: Option<usize>,
) -> Result<ImportanceReport> {
    if args.model == ModelChoice::Gnb {
        return Err(CliError::Usage("naive Bayes has no impurity-based importance".into()));
    }
    if args.task == Task::Regress && args.model != ModelChoice::Gbm {
        return Err(CliError::Usage("regression is only supported with --model gbm".into()));
    }
    let table = FeatureTable::read(features)?;
    let dataset = join_dataset(&table, &Manifest::read(manifest)?)?;
    let spec = args.model.spec();
    let model = spec.fit(&dataset.features, &dataset.labels, &dataset.scores, args.task, args.seed)?;
    let scores = model.importance().expect("tree ensembles have importance")?;
    let mut ranked = rank_features(dataset.features.names(), &scores);
    ranked.truncate(top.unwrap_or(10).min(ranked.len()));
    Ok(ImportanceReport {
        report: "importance",
        schema_version: SCHEMA_VERSION,
        model: spec.name(),
        task: args.task,
        seed: args.seed,
        n_samples: dataset.len(),
        features: ranked,
    })
}

pub fn cmd_synth(spec: &CorpusSpec, out_dir: &Path) -> Result<PathBuf> {
    Ok(synth_corpus(spec, out_dir)?.manifest)
}

/// Pretty-printed JSON with a trailing newline.
pub fn render_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_table(table: &FeatureTable, out: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    table.to_writer(&mut buf)?;
    write_output(out, &buf)
}
