use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow_tree, TreeParams};
use super::{
    binary_targets, check_rows, EnsembleKind, FeatureMatrix, Hyperparameters, ModelError,
    TreeEnsembleModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))` features per split.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1)),
            MaxFeatures::All => d,
            MaxFeatures::Count(m) => m.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

/// Bagged CART classifiers. Tree `t` draws from its own ChaCha stream
/// `(seed, t)`, so trees can be grown in parallel and stay reproducible.
pub fn fit_random_forest(
    data: &FeatureMatrix,
    labels: &[u8],
    params: &ForestParams,
    seed: u64,
) -> Result<TreeEnsembleModel, ModelError> {
    check_rows(data, labels.len())?;
    let y = binary_targets(labels)?;
    let n = data.n_rows();
    let d = data.n_cols();
    let m = params.max_features.resolve(d);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: (m < d).then_some(m),
    };
    let unit = vec![1.0; n];

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(data, &y, &unit, rows, &tree_params, Some(&mut rng))
        })
        .collect::<Vec<_>>();

    Ok(TreeEnsembleModel {
        kind: EnsembleKind::RandomForest,
        stage_weights: vec![1.0; trees.len()],
        trees,
        init_value: y.iter().sum::<f64>() / n as f64,
        learning_rate: 1.0,
        feature_schema: data.names().to_vec(),
        seed,
        hyperparameters: Hyperparameters::RandomForest(*params),
    })
}
