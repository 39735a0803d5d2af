use serde::{Deserialize, Serialize};

use super::ModelError;

/// Dense row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self, ModelError> {
        if data.len() != n_rows * n_cols {
            return Err(ModelError::DimensionMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            names: (0..n_cols).map(|i| format!("x{i}")).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(ModelError::DimensionMismatch(format!(
                "row {bad} has {} columns, expected {n_cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), n_cols)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.n_cols {
            return Err(ModelError::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                self.n_cols
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
            names: self.names.clone(),
        }
    }
}
