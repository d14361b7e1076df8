use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Dense row-major feature table with one integer class label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    values: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl FeatureMatrix {
    pub fn new(
        columns: Vec<String>,
        values: Vec<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let n_cols = columns.len();
        if n_cols == 0 {
            return Err(domain!("feature matrix needs at least one column"));
        }
        if values.len() != labels.len() * n_cols {
            return Err(domain!(
                "{} values do not fill {} rows of {} columns",
                values.len(),
                labels.len(),
                n_cols
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain!(
                "non-finite value in row {}, column `{}`",
                pos / n_cols,
                columns[pos % n_cols]
            ));
        }
        if class_count < 2 {
            return Err(domain!("at least two classes are required, got {class_count}"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(domain!("label {bad} outside 0..{class_count}"));
        }
        Ok(FeatureMatrix {
            columns,
            values,
            labels,
            class_count,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let d = self.n_cols();
        let mut values = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            values,
            labels,
            class_count: self.class_count,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Fails with a schema error when `n_cols` differs from this matrix.
    pub fn check_columns(&self, expected: usize) -> Result<()> {
        if self.n_cols() == expected {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "model expects {expected} feature columns, got {}",
                self.n_cols()
            )))
        }
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> FeatureMatrix {
        let d = self.n_cols();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % d, v))
            .collect();
        FeatureMatrix {
            columns: self.columns.clone(),
            values,
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}
