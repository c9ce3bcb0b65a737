//! The two feature rankings intersected by the selection pipeline.
//!
//! `PredictionValuesChange` accumulates the split gain each feature realized
//! during training. `LossFunctionChange` is permutation importance: the mean
//! rise in weighted logloss when one column is shuffled. Both approximate,
//! rather than replicate, the importances reported by other GBDT libraries.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::{weighted_logloss, GbdtModel};
use crate::dataset::DatasetMatrix;

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("model has split levels without recorded gains")]
    ModelMissingGainRecords,
    #[error("dataset lacks model features: {0:?}")]
    DimensionMismatch(Vec<String>),
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("repeats must be >= 1")]
    NoRepeats,
    #[error("dataset contains missing values")]
    MissingValues,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    PredictionValuesChange,
    LossFunctionChange,
}

impl ImportanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMethod::PredictionValuesChange => "prediction_values_change",
            ImportanceMethod::LossFunctionChange => "loss_function_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Percent,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    /// Column index in the model.
    pub index: usize,
    pub score: f64,
}

/// Scores sorted by descending score, ties by ascending feature index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub normalization: Normalization,
    pub scores: Vec<FeatureScore>,
}

impl ImportanceReport {
    /// Builds a report from per-feature scores given in feature order.
    pub fn new(
        method: ImportanceMethod,
        normalization: Normalization,
        names: &[String],
        raw: Vec<f64>,
    ) -> Self {
        let mut scores: Vec<FeatureScore> = names
            .iter()
            .zip(raw)
            .enumerate()
            .map(|(index, (name, score))| FeatureScore {
                feature: name.clone(),
                index,
                score,
            })
            .collect();
        scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
        ImportanceReport {
            method,
            normalization,
            scores,
        }
    }

    pub fn score_of(&self, feature: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.feature == feature).map(|s| s.score)
    }

    /// 1-based rank of `feature`.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.scores.iter().position(|s| s.feature == feature).map(|p| p + 1)
    }

    /// `method,feature,score,rank` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ImportanceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "feature", "score", "rank"])?;
        for (rank, s) in self.scores.iter().enumerate() {
            w.write_record([
                self.method.as_str(),
                s.feature.as_str(),
                &s.score.to_string(),
                &(rank + 1).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Sum of recorded split gains per feature, as a percentage of the total.
/// With no positive gain anywhere the raw zeros are returned.
pub fn prediction_values_change(model: &GbdtModel) -> Result<ImportanceReport, ImportanceError> {
    let mut raw = vec![0.0; model.n_features()];
    for tree in &model.trees {
        for level in tree.levels.iter().filter(|l| !l.is_null()) {
            let gain = level.gain.ok_or(ImportanceError::ModelMissingGainRecords)?;
            raw[level.feature] += gain;
        }
    }
    let total: f64 = raw.iter().sum();
    let normalization = if total > 0.0 {
        for v in &mut raw {
            *v = 100.0 * *v / total;
        }
        Normalization::Percent
    } else {
        Normalization::Raw
    };
    Ok(ImportanceReport::new(
        ImportanceMethod::PredictionValuesChange,
        normalization,
        &model.feature_names,
        raw,
    ))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream per (seed, feature, repeat).
pub(crate) fn stream_seed(seed: u64, feature: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ feature as u64) ^ repeat as u64)
}

pub const DEFAULT_REPEATS: usize = 5;

/// Mean over `repeats` shuffles of `logloss(column f permuted) - logloss`.
///
/// `data` must contain every model feature (matched by name; extra columns are
/// ignored). Features that no split uses score exactly 0.
pub fn loss_function_change(
    model: &GbdtModel,
    data: &DatasetMatrix,
    weights: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ImportanceError> {
    if repeats == 0 {
        return Err(ImportanceError::NoRepeats);
    }
    if weights.len() != data.n_rows() {
        return Err(ImportanceError::LengthMismatch {
            what: "weights",
            expected: data.n_rows(),
            found: weights.len(),
        });
    }
    let missing: Vec<String> = model
        .feature_names
        .iter()
        .filter(|f| data.feature_index(f).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ImportanceError::DimensionMismatch(missing));
    }
    let data = data
        .project(&model.feature_names)
        .map_err(|_| ImportanceError::DimensionMismatch(Vec::new()))?;
    data.require_complete()
        .map_err(|_| ImportanceError::MissingValues)?;
    let data = &data;

    let n = data.n_rows();
    let n_trees = model.trees.len();
    // leaf value of every (row, tree); untouched trees reuse these so the
    // summation order matches the baseline exactly
    let cache: Vec<f64> = (0..n)
        .flat_map(|i| model.trees.iter().map(move |t| t.leaf_value(data.row(i))))
        .collect();
    let baseline_raw: Vec<f64> = (0..n)
        .map(|i| {
            cache[i * n_trees..(i + 1) * n_trees]
                .iter()
                .fold(model.base_score, |acc, v| acc + v)
        })
        .collect();
    let labels = data.labels();
    let baseline = weighted_logloss(&baseline_raw, labels, weights);

    let scores: Vec<f64> = (0..model.n_features())
        .into_par_iter()
        .map(|f| {
            if !model.uses_feature(f) {
                return 0.0;
            }
            let uses: Vec<bool> = model.trees.iter().map(|t| t.uses_feature(f)).collect();
            let column = data.column(f);
            let mut row_buf = vec![0.0; data.n_features()];
            let mut raw = vec![0.0; n];
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, f, r));
                let mut shuffled = column.clone();
                shuffled.shuffle(&mut rng);
                for i in 0..n {
                    row_buf.copy_from_slice(data.row(i));
                    row_buf[f] = shuffled[i];
                    let cached = &cache[i * n_trees..(i + 1) * n_trees];
                    raw[i] = model.trees.iter().zip(&uses).zip(cached).fold(
                        model.base_score,
                        |acc, ((tree, &touched), &c)| {
                            acc + if touched { tree.leaf_value(&row_buf) } else { c }
                        },
                    );
                }
                total += weighted_logloss(&raw, labels, weights) - baseline;
            }
            total / repeats as f64
        })
        .collect();

    Ok(ImportanceReport::new(
        ImportanceMethod::LossFunctionChange,
        Normalization::Raw,
        &model.feature_names,
        scores,
    ))
}

/// First `min(k, features)` names in report order.
pub fn top_k(report: &ImportanceReport, k: usize) -> Vec<String> {
    report
        .scores
        .iter()
        .take(k)
        .map(|s| s.feature.clone())
        .collect()
}
