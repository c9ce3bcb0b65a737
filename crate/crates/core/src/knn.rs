//! Brute-force k-nearest-neighbour baseline (Euclidean, no scaling).
//!
//! Each query scans every training row: O(rows * features).

use thiserror::Error;

use crate::dataset::{Class, DatasetMatrix};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the {rows} training rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("expected {expected} feature values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    values: Vec<f64>,
    n_features: usize,
    labels: Vec<Class>,
    k: usize,
    feature_names: Vec<String>,
}

pub fn knn_fit(d: &DatasetMatrix, k: usize) -> Result<KnnModel, KnnError> {
    if k == 0 {
        return Err(KnnError::ZeroK);
    }
    if k > d.n_rows() {
        return Err(KnnError::KTooLarge { k, rows: d.n_rows() });
    }
    if d.require_complete().is_err() {
        return Err(KnnError::NonFinite);
    }
    Ok(KnnModel {
        values: d.rows().flatten().copied().collect(),
        n_features: d.n_features(),
        labels: d.labels().to_vec(),
        k,
        feature_names: d.feature_names().to_vec(),
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn train_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances are ordered by training-row index.
    pub fn neighbors(&self, row: &[f64]) -> Result<Vec<usize>, KnnError> {
        if row.len() != self.n_features {
            return Err(KnnError::DimensionMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = (0..self.labels.len())
            .map(|i| {
                let d2: f64 = self
                    .train_row(i)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }

    /// Fraction of the k nearest neighbours that are positive.
    pub fn predict_score(&self, row: &[f64]) -> Result<f64, KnnError> {
        let nn = self.neighbors(row)?;
        let pos = nn.iter().filter(|&&i| self.labels[i].is_positive()).count();
        Ok(pos as f64 / self.k as f64)
    }

    /// Majority vote; an exact 0.5 goes to the single nearest neighbour.
    pub fn predict_label(&self, row: &[f64]) -> Result<Class, KnnError> {
        let nn = self.neighbors(row)?;
        let pos = nn.iter().filter(|&&i| self.labels[i].is_positive()).count();
        Ok(match (2 * pos).cmp(&self.k) {
            std::cmp::Ordering::Greater => Class::Positive,
            std::cmp::Ordering::Less => Class::Negative,
            std::cmp::Ordering::Equal => self.labels[nn[0]],
        })
    }
}
