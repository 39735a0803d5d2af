use super::cart::Node;
use super::{ModelError, TreeEnsembleModel};

/// Mean decrease in impurity, normalized to sum to 1.
///
/// Each split contributes `(weight_node / weight_root) * impurity_decrease`
/// to its feature; contributions are summed over all trees before
/// normalizing.
pub fn mdi_importance(model: &TreeEnsembleModel) -> Result<Vec<f64>, ModelError> {
    let mut scores = vec![0.0; model.n_features()];
    for tree in &model.trees {
        let root_weight = tree.root().weight();
        if root_weight <= 0.0 {
            continue;
        }
        for node in tree.nodes() {
            if let Node::Split {
                feature,
                weight,
                impurity_decrease,
                ..
            } = node
            {
                scores[*feature] += weight / root_weight * impurity_decrease.max(0.0);
            }
        }
    }
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::NoSplits);
    }
    scores.iter_mut().for_each(|s| *s /= total);
    Ok(scores)
}
