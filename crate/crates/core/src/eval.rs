//! Cross-validation, metrics and feature correlation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    fit_adaboost, fit_gaussian_nb, fit_random_forest, gbm_fit, AdaBoostParams, FeatureMatrix,
    ForestParams, GbmParams, Loss, Model, ModelError,
};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: {n} for {needed}")]
    TooFewSamples { n: usize, needed: usize },
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("{0} does not support the {1} task")]
    UnsupportedTask(&'static str, &'static str),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Feature rows with a binary label and a continuous score per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(
        ids: Vec<String>,
        features: FeatureMatrix,
        labels: Vec<u8>,
        scores: Vec<f64>,
    ) -> Result<Self, EvalError> {
        let n = features.n_rows();
        if ids.len() != n || labels.len() != n || scores.len() != n {
            return Err(EvalError::InvalidDataset(format!(
                "{n} rows, {} ids, {} labels, {} scores",
                ids.len(),
                labels.len(),
                scores.len()
            )));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(EvalError::InvalidDataset("labels must be 0 or 1".into()));
        }
        Ok(Self {
            ids,
            features,
            labels,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Seeded shuffle followed by round-robin assignment.
///
/// With labels, each class is shuffled separately and the round-robin
/// counter carries over from one class to the next, so both overall fold
/// sizes and per-class counts differ by at most one.
pub fn kfold_split(
    n: usize,
    labels: Option<&[u8]>,
    k: usize,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewSamples {
            n,
            needed: k.max(2),
        });
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(EvalError::LengthMismatch(l.len(), n));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match labels {
        Some(l) => {
            let mut classes: Vec<u8> = l.to_vec();
            classes.sort_unstable();
            classes.dedup();
            classes
                .into_iter()
                .map(|c| (0..n).filter(|&i| l[i] == c).collect())
                .collect()
        }
        None => vec![(0..n).collect()],
    };
    let mut assignments = vec![0; n];
    let mut next = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified: labels.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[u8], actual: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn classification_metrics(c: &Confusion) -> Result<ClassificationMetrics, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Ok(ClassificationMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
    /// False when the actual values are constant; `r2` is then reported as 0.
    pub r2_defined: bool,
}

pub fn regression_metrics(predicted: &[f64], actual: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = actual.len() as f64;
    let mae = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / n;
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let (r2, r2_defined) = if sst > 0.0 {
        (1.0 - sse / sst, true)
    } else {
        (0.0, false)
    };
    Ok(RegressionMetrics {
        mae,
        mse: sse / n,
        r2,
        r2_defined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub constant_features: Vec<String>,
}

/// Pearson correlation between every pair of columns.
pub fn pearson_matrix(features: &FeatureMatrix) -> Result<CorrelationMatrix, EvalError> {
    let n = features.n_rows();
    if n < 2 {
        return Err(EvalError::TooFewSamples { n, needed: 2 });
    }
    let d = features.n_cols();
    let centred: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let col = features.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut values = vec![vec![0.0; d]; d];
    for i in 0..d {
        values[i][i] = 1.0;
        for j in i + 1..d {
            let r = if norms[i] > 0.0 && norms[j] > 0.0 {
                let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: features.names().to_vec(),
        values,
        constant_features: (0..d)
            .filter(|&j| norms[j] == 0.0)
            .map(|j| features.names()[j].clone())
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Regress => "regress",
        }
    }
}

/// Model family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbm(GbmParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
    GaussianNb,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gbm(_) => "gbm",
            ModelSpec::RandomForest(_) => "random_forest",
            ModelSpec::AdaBoost(_) => "adaboost",
            ModelSpec::GaussianNb => "gaussian_nb",
        }
    }

    pub fn fit(
        &self,
        data: &FeatureMatrix,
        labels: &[u8],
        scores: &[f64],
        task: Task,
        seed: u64,
    ) -> Result<Model, EvalError> {
        Ok(match (self, task) {
            (ModelSpec::Gbm(p), Task::Classify) => {
                let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
                let mut m = gbm_fit(data, &y, Loss::Logistic, p)?;
                m.seed = seed;
                Model::Ensemble(m)
            }
            (ModelSpec::Gbm(p), Task::Regress) => {
                let mut m = gbm_fit(data, scores, Loss::Squared, p)?;
                m.seed = seed;
                Model::Ensemble(m)
            }
            (ModelSpec::RandomForest(p), Task::Classify) => {
                Model::Ensemble(fit_random_forest(data, labels, p, seed)?)
            }
            (ModelSpec::AdaBoost(p), Task::Classify) => {
                let mut m = fit_adaboost(data, labels, p)?;
                m.seed = seed;
                Model::Ensemble(m)
            }
            (ModelSpec::GaussianNb, Task::Classify) => Model::GaussianNb(fit_gaussian_nb(data, labels)?),
            (spec, task) => return Err(EvalError::UnsupportedTask(spec.name(), task.name())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FoldMetrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: FoldMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: ModelSpec,
    pub seed: u64,
    pub k: usize,
    pub n_samples: usize,
    pub per_fold: Vec<FoldResult>,
    /// Arithmetic mean of the per-fold metrics.
    pub aggregate: FoldMetrics,
    /// Confusion counts summed over folds (classification only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    /// Metrics of the summed confusion matrix (classification only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<ClassificationMetrics>,
    pub correlation: CorrelationMatrix,
    /// MDI ranking of a model refit on the full dataset; empty for naive Bayes.
    pub importance: Vec<RankedFeature>,
}

/// Features sorted by descending score; ties keep schema order.
pub fn rank_features(names: &[String], scores: &[f64]) -> Vec<RankedFeature> {
    let mut ranked: Vec<RankedFeature> = names
        .iter()
        .zip(scores)
        .map(|(n, s)| RankedFeature {
            name: n.clone(),
            score: *s,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked
}

fn mean_classification(ms: &[ClassificationMetrics]) -> ClassificationMetrics {
    let n = ms.len() as f64;
    ClassificationMetrics {
        accuracy: ms.iter().map(|m| m.accuracy).sum::<f64>() / n,
        precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

fn mean_regression(ms: &[RegressionMetrics]) -> RegressionMetrics {
    let n = ms.len() as f64;
    RegressionMetrics {
        mae: ms.iter().map(|m| m.mae).sum::<f64>() / n,
        mse: ms.iter().map(|m| m.mse).sum::<f64>() / n,
        r2: ms.iter().map(|m| m.r2).sum::<f64>() / n,
        r2_defined: ms.iter().all(|m| m.r2_defined),
    }
}

pub fn cross_validate(
    dataset: &LabeledDataset,
    task: Task,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let n = dataset.len();
    let plan = match task {
        Task::Classify => kfold_split(n, Some(&dataset.labels), k, seed)?,
        Task::Regress => kfold_split(n, None, k, seed)?,
    };
    let x = &dataset.features;

    let mut per_fold = Vec::with_capacity(k);
    let mut summed = Confusion::default();
    for fold in 0..k {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let pick_u8 = |idx: &[usize]| idx.iter().map(|&i| dataset.labels[i]).collect::<Vec<_>>();
        let pick_f64 = |idx: &[usize]| idx.iter().map(|&i| dataset.scores[i]).collect::<Vec<_>>();
        let model = spec
            .fit(&x.select_rows(&train), &pick_u8(&train), &pick_f64(&train), task, seed)
            .map_err(|e| match e {
                EvalError::Model(source) => EvalError::Fold { fold, source },
                other => other,
            })?;
        let result = match task {
            Task::Classify => {
                let predicted = test
                    .iter()
                    .map(|&i| model.predict_label(x.row(i)))
                    .collect::<Result<Vec<_>, _>>()?;
                let confusion = Confusion::from_labels(&predicted, &pick_u8(&test));
                summed.add(&confusion);
                FoldResult {
                    fold,
                    n_test: test.len(),
                    metrics: FoldMetrics::Classification(classification_metrics(&confusion)?),
                    confusion: Some(confusion),
                }
            }
            Task::Regress => {
                let predicted = test
                    .iter()
                    .map(|&i| model.predict(x.row(i)))
                    .collect::<Result<Vec<_>, _>>()?;
                FoldResult {
                    fold,
                    n_test: test.len(),
                    metrics: FoldMetrics::Regression(regression_metrics(&predicted, &pick_f64(&test))?),
                    confusion: None,
                }
            }
        };
        per_fold.push(result);
    }

    let (aggregate, confusion, pooled) = match task {
        Task::Classify => {
            let ms: Vec<ClassificationMetrics> = per_fold
                .iter()
                .filter_map(|f| match f.metrics {
                    FoldMetrics::Classification(m) => Some(m),
                    FoldMetrics::Regression(_) => None,
                })
                .collect();
            (
                FoldMetrics::Classification(mean_classification(&ms)),
                Some(summed),
                Some(classification_metrics(&summed)?),
            )
        }
        Task::Regress => {
            let ms: Vec<RegressionMetrics> = per_fold
                .iter()
                .filter_map(|f| match f.metrics {
                    FoldMetrics::Regression(m) => Some(m),
                    FoldMetrics::Classification(_) => None,
                })
                .collect();
            (FoldMetrics::Regression(mean_regression(&ms)), None, None)
        }
    };

    let full = spec.fit(x, &dataset.labels, &dataset.scores, task, seed)?;
    let importance = match full.importance() {
        Some(Ok(scores)) => rank_features(x.names(), &scores),
        Some(Err(ModelError::NoSplits)) | None => Vec::new(),
        Some(Err(e)) => return Err(e.into()),
    };

    Ok(EvalReport {
        task,
        model: spec.clone(),
        seed,
        k,
        n_samples: n,
        per_fold,
        aggregate,
        confusion,
        pooled,
        correlation: pearson_matrix(x)?,
        importance,
    })
}
