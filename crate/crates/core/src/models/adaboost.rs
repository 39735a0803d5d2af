use serde::{Deserialize, Serialize};

use super::cart::{grow_tree, TreeParams};
use super::{
    binary_targets, check_rows, EnsembleKind, FeatureMatrix, Hyperparameters, ModelError,
    TreeEnsembleModel,
};

const ERROR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_stumps: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { n_stumps: 100 }
    }
}

/// `0.5 * ln((1 - e) / e)` with `e` clamped to `[1e-10, 1 - 1e-10]`.
pub fn stage_weight(error: f64) -> f64 {
    let e = error.clamp(ERROR_FLOOR, 1.0 - ERROR_FLOOR);
    0.5 * ((1.0 - e) / e).ln()
}

/// Discrete AdaBoost over depth-1 stumps.
///
/// Stops early when a stump's weighted error reaches 0.5 (that stump is
/// discarded) or drops to zero (that stump is kept).
pub fn fit_adaboost(
    data: &FeatureMatrix,
    labels: &[u8],
    params: &AdaBoostParams,
) -> Result<TreeEnsembleModel, ModelError> {
    check_rows(data, labels.len())?;
    let y = binary_targets(labels)?;
    let n = y.len();
    let stump = TreeParams::with_depth(1);
    let mut weights = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();

    for _ in 0..params.n_stumps {
        let tree = grow_tree(data, &y, &weights, (0..n).collect(), &stump, None);
        let correct: Vec<bool> = (0..n)
            .map(|i| (tree.predict(data.row(i)) >= 0.5) == (y[i] == 1.0))
            .collect();
        let error: f64 = weights
            .iter()
            .zip(&correct)
            .filter(|(_, ok)| !**ok)
            .map(|(w, _)| w)
            .sum();
        if error >= 0.5 {
            break;
        }
        let alpha = stage_weight(error);
        for (w, ok) in weights.iter_mut().zip(&correct) {
            *w *= if *ok { (-alpha).exp() } else { alpha.exp() };
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        trees.push(tree);
        alphas.push(alpha);
        if error == 0.0 {
            break;
        }
    }

    Ok(TreeEnsembleModel {
        kind: EnsembleKind::AdaBoost,
        trees,
        stage_weights: alphas,
        init_value: y.iter().sum::<f64>() / n as f64,
        learning_rate: 1.0,
        feature_schema: data.names().to_vec(),
        seed: 0,
        hyperparameters: Hyperparameters::AdaBoost(*params),
    })
}
