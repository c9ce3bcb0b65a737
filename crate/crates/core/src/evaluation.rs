//! Holdout scoring and stratified k-fold cross-validation for either model type.

use thiserror::Error;

use crate::boosting::{fit, BoostingError, GbdtModel, TrainConfig};
use crate::dataset::{stratified_kfold, Class, DatasetError, DatasetMatrix};
use crate::knn::{knn_fit, KnnError, KnnModel};
use crate::metrics::{aggregate_cv, metrics_report, CvSummary, MetricsError, MetricsReport};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Boosting(#[from] BoostingError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("dataset is missing model features {missing:?} (dataset-only columns: {extra:?})")]
    FeatureMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
}

/// What to train on each fold.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Gbdt(TrainConfig),
    Knn { k: usize },
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Gbdt(GbdtModel),
    Knn(KnnModel),
}

impl TrainedModel {
    pub fn train(spec: &ModelSpec, data: &DatasetMatrix) -> Result<Self, EvalError> {
        Ok(match spec {
            ModelSpec::Gbdt(cfg) => TrainedModel::Gbdt(fit(data, cfg)?),
            ModelSpec::Knn { k } => TrainedModel::Knn(knn_fit(data, *k)?),
        })
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Gbdt(m) => &m.feature_names,
            TrainedModel::Knn(m) => m.feature_names(),
        }
    }

    /// Ranking score: raw log-odds for GBDT, positive-neighbour fraction for k-NN.
    pub fn score(&self, row: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            TrainedModel::Gbdt(m) => m.predict_raw(row)?,
            TrainedModel::Knn(m) => m.predict_score(row)?,
        })
    }

    /// `threshold` applies to GBDT probabilities; k-NN uses its vote rule.
    pub fn label(&self, row: &[f64], threshold: f64) -> Result<Class, EvalError> {
        Ok(match self {
            TrainedModel::Gbdt(m) => m.predict_label(row, threshold)?,
            TrainedModel::Knn(m) => m.predict_label(row)?,
        })
    }
}

/// Projects `data` onto the model's features, failing with the symmetric
/// difference when any model feature is absent.
pub fn align_features(names: &[String], data: &DatasetMatrix) -> Result<DatasetMatrix, EvalError> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| data.feature_index(n).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        let extra = data
            .feature_names()
            .iter()
            .filter(|f| !names.contains(f))
            .cloned()
            .collect();
        return Err(EvalError::FeatureMismatch { missing, extra });
    }
    Ok(data.project(names)?)
}

/// Scores, hard predictions and the resulting metrics for one dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub scores: Vec<f64>,
    pub predictions: Vec<Class>,
}

pub fn evaluate(
    model: &TrainedModel,
    data: &DatasetMatrix,
    threshold: f64,
) -> Result<Evaluation, EvalError> {
    let data = align_features(model.feature_names(), data)?;
    data.require_complete()?;
    let scores = data
        .rows()
        .map(|r| model.score(r))
        .collect::<Result<Vec<_>, _>>()?;
    let predictions = data
        .rows()
        .map(|r| model.label(r, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let report = metrics_report(data.labels(), &predictions, &scores)?;
    Ok(Evaluation {
        report,
        scores,
        predictions,
    })
}

/// Stratified k-fold CV: per-fold metrics averaged, plus pooled out-of-fold
/// metrics.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &DatasetMatrix,
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<CvSummary, EvalError> {
    let plan = stratified_kfold(data.labels(), k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    let mut pooled_labels = Vec::with_capacity(data.n_rows());
    let mut pooled_preds = Vec::with_capacity(data.n_rows());
    let mut pooled_scores = Vec::with_capacity(data.n_rows());
    for (i, fold) in plan.folds.iter().enumerate() {
        let train = data.select_rows(&plan.train_indices(i))?;
        let test = data.select_rows(fold)?;
        let model = TrainedModel::train(spec, &train)?;
        let eval = evaluate(&model, &test, threshold)?;
        pooled_labels.extend_from_slice(test.labels());
        pooled_preds.extend(eval.predictions);
        pooled_scores.extend(eval.scores);
        per_fold.push(eval.report);
    }
    let mut summary = aggregate_cv(per_fold)?;
    summary.pooled = Some(metrics_report(&pooled_labels, &pooled_preds, &pooled_scores)?);
    Ok(summary)
}
