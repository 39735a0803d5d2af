use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{binary_targets, check_rows, FeatureMatrix, ModelError};

/// Independent per-feature Gaussians for each of the two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    /// Indexed by class (0, 1).
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub variance_floor: f64,
    pub feature_schema: Vec<String>,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn fit_gaussian_nb(data: &FeatureMatrix, labels: &[u8]) -> Result<GaussianNbModel, ModelError> {
    check_rows(data, labels.len())?;
    binary_targets(labels)?;
    let d = data.n_cols();
    let max_var = (0..d)
        .map(|j| mean_var(data.column(j).into_iter()).1)
        .fold(0.0, f64::max);
    let floor = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };

    let mut priors = [0.0; 2];
    let mut means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut variances: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for class in 0..2u8 {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let c = usize::from(class);
        priors[c] = rows.len() as f64 / labels.len() as f64;
        for j in 0..d {
            let (m, v) = mean_var(rows.iter().map(|&i| data.get(i, j)));
            means[c].push(m);
            variances[c].push(v.max(floor));
        }
    }
    Ok(GaussianNbModel {
        priors,
        means,
        variances,
        variance_floor: floor,
        feature_schema: data.names().to_vec(),
    })
}

impl GaussianNbModel {
    /// Unnormalized log posterior of each class.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Result<[f64; 2], ModelError> {
        if row.len() != self.means[0].len() {
            return Err(ModelError::DimensionMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.means[0].len()
            )));
        }
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.priors[c].ln()
                + row
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((x, m), v)| -0.5 * (2.0 * PI * v).ln() - (x - m).powi(2) / (2.0 * v))
                    .sum::<f64>();
        }
        Ok(out)
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ModelError> {
        let [l0, l1] = self.joint_log_likelihood(row)?;
        let top = l0.max(l1);
        let (e0, e1) = ((l0 - top).exp(), (l1 - top).exp());
        Ok(e1 / (e0 + e1))
    }
}
