//! Gradient boosting with shrinkage over depth-limited CART trees.
//!
//! Logistic loss starts from the log-odds of the positive rate and replaces
//! each fitted leaf with a single Newton step `sum(r) / sum(p * (1 - p))`
//! over the samples in that leaf. Squared loss starts from the target mean
//! and keeps the mean-residual leaves.

use serde::{Deserialize, Serialize};

use super::cart::{grow_tree, TreeParams};
use super::{
    binary_targets, check_rows, EnsembleKind, FeatureMatrix, Hyperparameters, ModelError,
    TreeEnsembleModel,
};

const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of 0/1 targets under raw scores.
pub fn logistic_loss(targets: &[f64], raw: &[f64]) -> f64 {
    // log(1 + e^F) - y F, written to stay finite for large |F|.
    let total: f64 = targets
        .iter()
        .zip(raw)
        .map(|(y, f)| f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f)
        .sum();
    total / targets.len() as f64
}

fn squared_loss(targets: &[f64], raw: &[f64]) -> f64 {
    targets
        .iter()
        .zip(raw)
        .map(|(y, f)| 0.5 * (y - f).powi(2))
        .sum::<f64>()
        / targets.len() as f64
}

pub fn gbm_fit(
    data: &FeatureMatrix,
    targets: &[f64],
    loss: Loss,
    params: &GbmParams,
) -> Result<TreeEnsembleModel, ModelError> {
    check_rows(data, targets.len())?;
    if data.n_rows() < 2 {
        return Err(ModelError::InvalidInput("need at least 2 samples".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(ModelError::InvalidInput("non-finite target".into()));
    }
    let y: Vec<f64> = match loss {
        Loss::Logistic => {
            let labels: Vec<u8> = targets
                .iter()
                .map(|&t| match t {
                    0.0 => Ok(0),
                    1.0 => Ok(1),
                    other => Err(ModelError::InvalidInput(format!(
                        "logistic target {other} is not 0 or 1"
                    ))),
                })
                .collect::<Result<_, _>>()?;
            binary_targets(&labels)?
        }
        Loss::Squared => targets.to_vec(),
    };

    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let init = match loss {
        Loss::Logistic => (mean / (1.0 - mean)).ln(),
        Loss::Squared => mean,
    };
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    let unit = vec![1.0; n];
    let mut raw = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_estimators);

    for _ in 0..params.n_estimators {
        let residuals: Vec<f64> = match loss {
            Loss::Logistic => y.iter().zip(&raw).map(|(y, f)| y - sigmoid(*f)).collect(),
            Loss::Squared => y.iter().zip(&raw).map(|(y, f)| y - f).collect(),
        };
        let mut tree = grow_tree(data, &residuals, &unit, (0..n).collect(), &tree_params, None);
        let leaf_of: Vec<usize> = (0..n).map(|i| tree.apply(data.row(i))).collect();

        if loss == Loss::Logistic {
            let mut sums: Vec<(usize, f64, f64)> = Vec::new();
            for (i, &leaf) in leaf_of.iter().enumerate() {
                let p = sigmoid(raw[i]);
                match sums.iter_mut().find(|s| s.0 == leaf) {
                    Some(s) => {
                        s.1 += residuals[i];
                        s.2 += p * (1.0 - p);
                    }
                    None => sums.push((leaf, residuals[i], p * (1.0 - p))),
                }
            }
            for (leaf, num, den) in sums {
                tree.set_leaf_value(leaf, num / den.max(HESSIAN_FLOOR));
            }
        }

        for (f, &leaf) in raw.iter_mut().zip(&leaf_of) {
            *f += params.learning_rate * tree.leaf_value(leaf).expect("leaf index");
        }
        trees.push(tree);
    }

    Ok(TreeEnsembleModel {
        kind: match loss {
            Loss::Logistic => EnsembleKind::GbmClassifier,
            Loss::Squared => EnsembleKind::GbmRegressor,
        },
        stage_weights: vec![params.learning_rate; trees.len()],
        trees,
        init_value: init,
        learning_rate: params.learning_rate,
        feature_schema: data.names().to_vec(),
        seed: 0,
        hyperparameters: Hyperparameters::Gbm(*params),
    })
}

/// Training loss after 0, 1, ..., n_stages stages, recomputed from the model.
pub fn staged_training_loss(
    model: &TreeEnsembleModel,
    data: &FeatureMatrix,
    targets: &[f64],
) -> Vec<f64> {
    let mut raw = vec![model.init_value; data.n_rows()];
    let loss_of = |raw: &[f64]| match model.kind {
        EnsembleKind::GbmRegressor => squared_loss(targets, raw),
        _ => logistic_loss(targets, raw),
    };
    let mut out = vec![loss_of(&raw)];
    for (tree, w) in model.trees.iter().zip(&model.stage_weights) {
        for (i, f) in raw.iter_mut().enumerate() {
            *f += w * tree.predict(data.row(i));
        }
        out.push(loss_of(&raw));
    }
    out
}
