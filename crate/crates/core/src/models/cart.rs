//! Weighted squared-error CART regression trees.
//!
//! Splits are exhaustive over every feature and every midpoint between
//! consecutive distinct values. Among candidates whose impurity decrease is
//! within a relative `1e-12` of the best, the lowest feature index wins,
//! then the lowest threshold.

use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ModelError};

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        Self {
            max_depth: Some(max_depth),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
        weight: f64,
        impurity: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        weight: f64,
        impurity: f64,
        /// `impurity - (w_l * impurity_l + w_r * impurity_r) / weight`.
        impurity_decrease: f64,
    },
}

impl Node {
    pub fn n_samples(&self) -> usize {
        match self {
            Node::Leaf { n_samples, .. } | Node::Split { n_samples, .. } => *n_samples,
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            Node::Leaf { weight, .. } | Node::Split { weight, .. } => *weight,
        }
    }
}

/// Binary regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl CartTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn is_leaf_only(&self) -> bool {
        matches!(self.root(), Node::Leaf { .. })
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf `row` falls into.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.apply(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("apply returns a leaf"),
        }
    }

    pub fn leaf_value(&self, leaf: usize) -> Option<f64> {
        match self.nodes.get(leaf)? {
            Node::Leaf { value, .. } => Some(*value),
            Node::Split { .. } => None,
        }
    }

    pub(crate) fn set_leaf_value(&mut self, leaf: usize, new_value: f64) {
        if let Some(Node::Leaf { value, .. }) = self.nodes.get_mut(leaf) {
            *value = new_value;
        }
    }
}

/// Chosen split for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted squared-error reduction `sse(node) - sse(left) - sse(right)`.
    pub sse_decrease: f64,
}

struct Grower<'a, 'r> {
    data: &'a FeatureMatrix,
    targets: &'a [f64],
    weights: &'a [f64],
    params: TreeParams,
    rng: Option<&'r mut dyn RngCore>,
    nodes: Vec<Node>,
}

fn node_stats(rows: &[usize], targets: &[f64], weights: &[f64]) -> (f64, f64, f64) {
    let w: f64 = rows.iter().map(|&i| weights[i]).sum();
    if w <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = rows.iter().map(|&i| weights[i] * targets[i]).sum::<f64>() / w;
    let sse = rows
        .iter()
        .map(|&i| weights[i] * (targets[i] - mean).powi(2))
        .sum::<f64>();
    (w, mean, sse)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid >= b {
        a
    } else {
        mid
    }
}

/// Best split of `rows` over `features` (ascending), or `None` when no split
/// reduces the impurity.
pub(crate) fn best_split(
    data: &FeatureMatrix,
    targets: &[f64],
    weights: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let first = targets[rows[0]];
    if rows.iter().all(|&i| targets[i] == first) {
        return None;
    }
    let (w_total, mean, sse) = node_stats(rows, targets, weights);
    if w_total <= 0.0 || sse <= 0.0 {
        return None;
    }

    // (feature, threshold, score) where score = S_l^2/W_l + S_r^2/W_r on centred targets.
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    let mut order = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| data.get(a, f).total_cmp(&data.get(b, f)).then(a.cmp(&b)));
        let mut w_left = 0.0;
        let mut s_left = 0.0;
        for p in 0..n - 1 {
            let i = order[p];
            w_left += weights[i];
            s_left += weights[i] * (targets[i] - mean);
            let (here, next) = (data.get(i, f), data.get(order[p + 1], f));
            if here == next || p + 1 < min_leaf || n - p - 1 < min_leaf {
                continue;
            }
            let w_right = w_total - w_left;
            if w_left <= 0.0 || w_right <= 0.0 {
                continue;
            }
            let score = s_left * s_left / w_left + s_left * s_left / w_right;
            candidates.push((f, midpoint(here, next), score));
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * sse;
    if !(best > tol) {
        return None;
    }
    candidates
        .into_iter()
        .filter(|c| c.2 >= best - tol)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|(feature, threshold, score)| SplitChoice {
            feature,
            threshold,
            sse_decrease: score,
        })
}

impl Grower<'_, '_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_cols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut picked = sample(rng, d, m.max(1)).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..d).collect(),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (weight, mean, sse) = node_stats(&rows, self.targets, self.weights);
        let impurity = if weight > 0.0 { sse / weight } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: rows.len(),
            weight,
            impurity,
        });

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || rows.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let features = self.candidate_features();
        let Some(split) = best_split(
            self.data,
            self.targets,
            self.weights,
            &rows,
            &features,
            self.params.min_samples_leaf,
        ) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.data.get(i, split.feature) <= split.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            n_samples: rows.len(),
            weight,
            impurity,
            impurity_decrease: split.sse_decrease / weight,
        };
        id
    }
}

fn validate(data: &FeatureMatrix, targets: &[f64], weights: &[f64]) -> Result<(), ModelError> {
    if data.n_rows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if targets.len() != data.n_rows() || weights.len() != data.n_rows() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} rows, {} targets, {} weights",
            data.n_rows(),
            targets.len(),
            weights.len()
        )));
    }
    if targets.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidInput("non-finite target or weight".into()));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(ModelError::InvalidInput("negative sample weight".into()));
    }
    Ok(())
}

pub fn build_cart(
    data: &FeatureMatrix,
    targets: &[f64],
    weights: &[f64],
    params: &TreeParams,
) -> Result<CartTree, ModelError> {
    validate(data, targets, weights)?;
    Ok(grow_tree(data, targets, weights, (0..data.n_rows()).collect(), params, None))
}

/// Grows a tree over `rows` (duplicates allowed), drawing per-split feature
/// subsets from `rng` when `params.max_features` is set.
pub(crate) fn grow_tree(
    data: &FeatureMatrix,
    targets: &[f64],
    weights: &[f64],
    rows: Vec<usize>,
    params: &TreeParams,
    rng: Option<&mut dyn RngCore>,
) -> CartTree {
    let mut grower = Grower {
        data,
        targets,
        weights,
        params: *params,
        rng,
        nodes: Vec::new(),
    };
    grower.grow(rows, 0);
    CartTree {
        nodes: grower.nodes,
        n_features: data.n_cols(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn depth_zero_is_weighted_mean() {
        let x = matrix(&[vec![0.0], vec![1.0], vec![2.0]]);
        let t = build_cart(&x, &[1.0, 2.0, 4.0], &[1.0, 1.0, 2.0], &TreeParams::with_depth(0)).unwrap();
        assert!(t.is_leaf_only());
        assert!((t.predict(&[5.0]) - 11.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_do_not_split() {
        let x = matrix(&[vec![0.0, 3.0], vec![1.0, 2.0], vec![2.0, 1.0]]);
        let t = build_cart(&x, &[0.7; 3], &[1.0; 3], &TreeParams::default()).unwrap();
        assert!(t.is_leaf_only());
    }

    #[test]
    fn perfect_separation_at_midpoint() {
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0], vec![10.0], vec![11.0]]);
        let t = build_cart(&x, &[0.0, 0.0, 0.0, 5.0, 5.0], &[1.0; 5], &TreeParams::default()).unwrap();
        match t.root() {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 6.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[2.5]), 0.0);
        assert_eq!(t.predict(&[7.0]), 5.0);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Columns 0 and 1 induce the same partition.
        let x = matrix(&[vec![0.0, 5.0], vec![1.0, 6.0], vec![2.0, 7.0], vec![3.0, 8.0]]);
        let t = build_cart(&x, &[0.0, 0.0, 1.0, 1.0], &[1.0; 4], &TreeParams::with_depth(1)).unwrap();
        assert!(matches!(t.root(), Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let params = TreeParams {
            min_samples_leaf: 2,
            ..TreeParams::default()
        };
        let t = build_cart(&x, &[9.0, 0.0, 0.0, 0.0, 0.0], &[1.0; 5], &params).unwrap();
        for node in t.nodes() {
            if let Node::Split { left, right, .. } = node {
                assert!(t.nodes()[*left].n_samples() >= 2);
                assert!(t.nodes()[*right].n_samples() >= 2);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            build_cart(&x, &[1.0], &[1.0, 1.0], &TreeParams::default()),
            Err(ModelError::DimensionMismatch(_))
        ));
    }
}
