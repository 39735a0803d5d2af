//! Tree ensembles and baselines, all trained from scratch.

mod adaboost;
mod cart;
mod forest;
mod gbm;
mod importance;
mod matrix;
mod naive_bayes;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adaboost::{fit_adaboost, stage_weight, AdaBoostParams};
pub use cart::{build_cart, CartTree, Node, SplitChoice, TreeParams};
pub use forest::{fit_random_forest, ForestParams, MaxFeatures};
pub use gbm::{gbm_fit, logistic_loss, sigmoid, staged_training_loss, GbmParams, Loss};
pub use importance::mdi_importance;
pub use matrix::FeatureMatrix;
pub use naive_bayes::{fit_gaussian_nb, GaussianNbModel};

/// Identifies the model artifact format on disk.
pub const MODEL_FORMAT: &str = "speech-screen-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no tree in the model has a split")]
    NoSplits,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    GbmClassifier,
    GbmRegressor,
    RandomForest,
    AdaBoost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Gbm(GbmParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub kind: EnsembleKind,
    pub trees: Vec<CartTree>,
    pub stage_weights: Vec<f64>,
    /// Raw score before any tree: log-odds for the GBM classifier, mean for
    /// the regressor, positive base rate for forests and AdaBoost.
    pub init_value: f64,
    pub learning_rate: f64,
    pub feature_schema: Vec<String>,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
}

impl TreeEnsembleModel {
    pub fn n_features(&self) -> usize {
        self.feature_schema.len()
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Additive score `init + sum(weight_t * tree_t(row))` over the first `stages` trees.
    pub fn raw_score(&self, row: &[f64], stages: usize) -> f64 {
        self.trees
            .iter()
            .zip(&self.stage_weights)
            .take(stages)
            .fold(self.init_value, |acc, (t, w)| acc + w * t.predict(row))
    }

    /// Probability of the positive class for classifiers, the value for the regressor.
    pub fn predict(&self, row: &[f64]) -> Result<f64, ModelError> {
        self.check_row(row)?;
        Ok(match self.kind {
            EnsembleKind::GbmClassifier => sigmoid(self.raw_score(row, self.trees.len())),
            EnsembleKind::GbmRegressor => self.raw_score(row, self.trees.len()),
            EnsembleKind::RandomForest => {
                if self.trees.is_empty() {
                    return Ok(self.init_value);
                }
                let votes = self
                    .trees
                    .iter()
                    .filter(|t| t.predict(row) >= 0.5)
                    .count();
                votes as f64 / self.trees.len() as f64
            }
            EnsembleKind::AdaBoost => {
                let total: f64 = self.stage_weights.iter().sum();
                if self.trees.is_empty() || total <= 0.0 {
                    return Ok(self.init_value);
                }
                let margin: f64 = self
                    .trees
                    .iter()
                    .zip(&self.stage_weights)
                    .map(|(t, a)| if t.predict(row) >= 0.5 { *a } else { -*a })
                    .sum();
                0.5 * (1.0 + margin / total)
            }
        })
    }
}

/// Any trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Ensemble(TreeEnsembleModel),
    GaussianNb(GaussianNbModel),
}

impl Model {
    pub fn predict(&self, row: &[f64]) -> Result<f64, ModelError> {
        match self {
            Model::Ensemble(m) => m.predict(row),
            Model::GaussianNb(m) => m.predict_proba(row),
        }
    }

    /// Hard 0/1 label at probability threshold 0.5.
    pub fn predict_label(&self, row: &[f64]) -> Result<u8, ModelError> {
        Ok(u8::from(self.predict(row)? >= 0.5))
    }

    pub fn feature_schema(&self) -> &[String] {
        match self {
            Model::Ensemble(m) => &m.feature_schema,
            Model::GaussianNb(m) => &m.feature_schema,
        }
    }

    pub fn importance(&self) -> Option<Result<Vec<f64>, ModelError>> {
        match self {
            Model::Ensemble(m) => Some(mdi_importance(m)),
            Model::GaussianNb(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let artifact = ArtifactRef {
            format: MODEL_FORMAT,
            version: MODEL_FORMAT_VERSION,
            model: self,
        };
        serde_json::to_string(&artifact).map_err(|e| ModelError::Artifact(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let artifact: Artifact =
            serde_json::from_str(text).map_err(|e| ModelError::Artifact(e.to_string()))?;
        if artifact.format != MODEL_FORMAT {
            return Err(ModelError::Artifact(format!("unknown format {:?}", artifact.format)));
        }
        if artifact.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Artifact(format!(
                "unsupported version {}",
                artifact.version
            )));
        }
        Ok(artifact.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize)]
struct ArtifactRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a Model,
}

#[derive(Deserialize)]
struct Artifact {
    format: String,
    version: u32,
    model: Model,
}

/// Checks that labels are 0/1 with both classes present; returns them as floats.
pub(crate) fn binary_targets(labels: &[u8]) -> Result<Vec<f64>, ModelError> {
    if let Some(bad) = labels.iter().find(|l| **l > 1) {
        return Err(ModelError::InvalidInput(format!("label {bad} is not 0 or 1")));
    }
    let positives = labels.iter().filter(|l| **l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(labels.iter().map(|&l| f64::from(l)).collect())
}

pub(crate) fn check_rows(data: &FeatureMatrix, n_targets: usize) -> Result<(), ModelError> {
    if data.n_rows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if data.n_rows() != n_targets {
        return Err(ModelError::DimensionMismatch(format!(
            "{} rows but {n_targets} targets",
            data.n_rows()
        )));
    }
    Ok(())
}
