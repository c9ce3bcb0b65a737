//! Labeled expression matrices: ingestion, filtering, splitting and binning.

mod binning;
mod ingest;
mod split;

pub use binning::{quantile_bin, BinnedDataset, DEFAULT_MAX_BINS};
pub use ingest::{ingest_csv, IngestOptions};
pub use split::{stratified_kfold, stratified_split, FoldPlan, SplitPlan};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeatureName(String),
    #[error("labels must contain both classes (positive: {positives}, negative: {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("label column holds more than two distinct values: {0:?}")]
    TooManyLabels(Vec<String>),
    #[error("dataset has no age column")]
    NoAgeColumn,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-finite value at row {row}, feature `{feature}`")]
    NonFiniteValue { row: usize, feature: String },
    #[error("dataset contains missing values (e.g. row {row}, feature `{feature}`)")]
    MissingValues { row: usize, feature: String },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("split leaves the {0} part empty")]
    EmptyPartition(&'static str),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("class {class:?} has {count} rows, fewer than the {k} folds requested")]
    TooFewRowsPerClass { class: Class, count: usize, k: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("row index {0} out of range")]
    RowOutOfRange(usize),
}

/// Binary class label. `Positive` is the disease class (AML).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Negative,
    Positive,
}

impl Class {
    pub fn is_positive(self) -> bool {
        self == Class::Positive
    }

    /// 1.0 for positive, 0.0 for negative.
    pub fn target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }

    pub fn flipped(self) -> Class {
        match self {
            Class::Positive => Class::Negative,
            Class::Negative => Class::Positive,
        }
    }
}

impl From<bool> for Class {
    fn from(positive: bool) -> Self {
        if positive {
            Class::Positive
        } else {
            Class::Negative
        }
    }
}

/// Per-class row counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn of(labels: &[Class]) -> Self {
        let positive = labels.iter().filter(|c| c.is_positive()).count();
        ClassCounts {
            positive,
            negative: labels.len() - positive,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative
    }

    pub fn require_both(&self) -> Result<(), DatasetError> {
        if self.positive == 0 || self.negative == 0 {
            return Err(DatasetError::DegenerateLabels {
                positives: self.positive,
                negatives: self.negative,
            });
        }
        Ok(())
    }
}

/// Labeled numeric feature matrix with named columns, stored row-major.
///
/// All values are finite, except that the age column (when present) may hold
/// NaN to mark a missing age; [`drop_missing_age`] removes those rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMatrix {
    feature_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<Class>,
    sample_ids: Vec<String>,
    age_column: Option<usize>,
}

impl DatasetMatrix {
    /// Builds a validated matrix from row vectors.
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<Class>,
        sample_ids: Vec<String>,
        age_column: Option<usize>,
    ) -> Result<Self, DatasetError> {
        let width = feature_names.len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DatasetError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: width,
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(feature_names, values, labels, sample_ids, age_column)
    }

    pub(crate) fn from_flat(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<Class>,
        sample_ids: Vec<String>,
        age_column: Option<usize>,
    ) -> Result<Self, DatasetError> {
        let width = feature_names.len();
        let n = labels.len();
        if sample_ids.len() != n || values.len() != n * width {
            return Err(DatasetError::RaggedRow {
                row: 0,
                found: values.len(),
                expected: n * width,
            });
        }
        let mut seen = HashSet::with_capacity(width);
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateFeatureName(name.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(DatasetError::DuplicateSampleId(id.clone()));
            }
        }
        if let Some(a) = age_column {
            if a >= width {
                return Err(DatasetError::NoAgeColumn);
            }
        }
        for (idx, v) in values.iter().enumerate() {
            let col = idx % width.max(1);
            let missing_age = age_column == Some(col) && v.is_nan();
            if !v.is_finite() && !missing_age {
                return Err(DatasetError::NonFiniteValue {
                    row: idx / width,
                    feature: feature_names[col].clone(),
                });
            }
        }
        Ok(DatasetMatrix {
            feature_names,
            values,
            labels,
            sample_ids,
            age_column,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn age_column(&self) -> Option<usize> {
        self.age_column
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, feature)).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.labels)
    }

    /// Fails with `MissingValues` if any cell (i.e. a missing age) is NaN.
    pub fn require_complete(&self) -> Result<(), DatasetError> {
        match self.values.iter().position(|v| v.is_nan()) {
            None => Ok(()),
            Some(idx) => Err(DatasetError::MissingValues {
                row: idx / self.n_features(),
                feature: self.feature_names[idx % self.n_features()].clone(),
            }),
        }
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DatasetMatrix, DatasetError> {
        let w = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(DatasetError::RowOutOfRange(i));
            }
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            ids.push(self.sample_ids[i].clone());
        }
        Self::from_flat(self.feature_names.clone(), values, labels, ids, self.age_column)
    }

    /// New matrix restricted to the named features, in the given order.
    pub fn project(&self, names: &[String]) -> Result<DatasetMatrix, DatasetError> {
        let cols = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| DatasetError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.rows() {
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let age_column = self
            .age_column
            .and_then(|a| cols.iter().position(|&c| c == a));
        Self::from_flat(
            names.to_vec(),
            values,
            self.labels.clone(),
            self.sample_ids.clone(),
            age_column,
        )
    }

    /// SHA-256 over names, ids, labels and value bits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.feature_names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for (id, label) in self.sample_ids.iter().zip(&self.labels) {
            hasher.update(id.as_bytes());
            hasher.update([0u8, label.is_positive() as u8]);
        }
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn fingerprint(&self) -> DatasetFingerprint {
        DatasetFingerprint {
            rows: self.n_rows(),
            columns: self.n_features(),
            content_sha256: self.content_hash(),
        }
    }
}

/// Row/column counts plus a content hash, recorded in provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub columns: usize,
    pub content_sha256: String,
}

/// Removes rows whose age is missing (NaN). Row order is preserved.
pub fn drop_missing_age(d: &DatasetMatrix) -> Result<DatasetMatrix, DatasetError> {
    let age = d.age_column.ok_or(DatasetError::NoAgeColumn)?;
    let keep: Vec<usize> = (0..d.n_rows())
        .filter(|&i| d.value(i, age).is_finite())
        .collect();
    d.select_rows(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(ages: &[f64]) -> DatasetMatrix {
        let n = ages.len();
        DatasetMatrix::new(
            vec!["age".into(), "g1".into()],
            ages.iter().enumerate().map(|(i, &a)| vec![a, i as f64]).collect(),
            (0..n).map(|i| Class::from(i % 2 == 0)).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
            Some(0),
        )
        .unwrap()
    }

    #[test]
    fn drop_missing_age_filters_and_preserves_order() {
        let d = toy(&[30.0, f64::NAN, 41.0, f64::NAN, 55.0]);
        let out = drop_missing_age(&d).unwrap();
        assert_eq!(out.n_rows(), 3);
        assert_eq!(out.sample_ids(), &["s0", "s2", "s4"]);
        assert_eq!(out.column(1), vec![0.0, 2.0, 4.0]);
        out.require_complete().unwrap();
    }

    #[test]
    fn drop_missing_age_identity_and_idempotent() {
        let d = toy(&[30.0, 31.0, 32.0]);
        assert_eq!(drop_missing_age(&d).unwrap(), d);
        let d = toy(&[30.0, f64::NAN, 32.0]);
        let once = drop_missing_age(&d).unwrap();
        assert_eq!(drop_missing_age(&once).unwrap(), once);
    }

    #[test]
    fn drop_missing_age_requires_age_column() {
        let d = DatasetMatrix::new(
            vec!["g".into()],
            vec![vec![1.0], vec![2.0]],
            vec![Class::Positive, Class::Negative],
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap();
        assert!(matches!(drop_missing_age(&d), Err(DatasetError::NoAgeColumn)));
    }

    #[test]
    fn nan_outside_age_column_is_rejected() {
        let err = DatasetMatrix::new(
            vec!["age".into(), "g".into()],
            vec![vec![1.0, f64::NAN]],
            vec![Class::Positive],
            vec!["a".into()],
            Some(0),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::NonFiniteValue { row: 0, .. }));
    }

    #[test]
    fn duplicate_ids_and_names_rejected() {
        let err = DatasetMatrix::new(
            vec!["g".into()],
            vec![vec![1.0], vec![2.0]],
            vec![Class::Positive, Class::Negative],
            vec!["a".into(), "a".into()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateSampleId(_)));
        let err = DatasetMatrix::new(
            vec!["g".into(), "g".into()],
            vec![vec![1.0, 2.0]],
            vec![Class::Positive],
            vec!["a".into()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFeatureName(_)));
    }

    #[test]
    fn project_reorders_and_tracks_age() {
        let d = toy(&[30.0, 40.0]);
        let p = d.project(&["g1".into(), "age".into()]).unwrap();
        assert_eq!(p.row(1), &[1.0, 40.0]);
        assert_eq!(p.age_column(), Some(1));
        assert!(matches!(
            d.project(&["nope".into()]),
            Err(DatasetError::UnknownFeature(_))
        ));
    }

    #[test]
    fn content_hash_sensitive_to_values() {
        let a = toy(&[30.0, 40.0]);
        let b = toy(&[30.0, 40.5]);
        assert_eq!(a.content_hash(), toy(&[30.0, 40.0]).content_hash());
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
