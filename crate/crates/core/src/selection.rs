//! Wide model → dual top-K intersection → exclusion filter → compact model.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::{fit, BoostingError, GbdtModel, TrainConfig};
use crate::dataset::{stratified_split, DatasetError, DatasetFingerprint, DatasetMatrix};
use crate::evaluation::{cross_validate, evaluate, EvalError, ModelSpec, TrainedModel, DEFAULT_FOLDS};
use crate::importance::{
    loss_function_change, prediction_values_change, top_k, ImportanceError, ImportanceReport,
    DEFAULT_REPEATS,
};
use crate::metrics::{CvSummary, MetricsReport};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("importance reports cover different features")]
    FeatureUniverseMismatch,
    #[error("always-include feature {0:?} is not a dataset column")]
    UnknownFeature(String),
    #[error("no features left after intersecting the top {top_k} and applying exclusions")]
    EmptySelection {
        top_k: usize,
        reports: Box<SelectionReports>,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Boosting(#[from] BoostingError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub top_k: usize,
    pub exclusion_list: BTreeSet<String>,
    /// Appended after the ranked features, in this order.
    pub always_include: Vec<String>,
    pub wide_config: TrainConfig,
    pub compact_config: TrainConfig,
    pub seed: u64,
    /// Seed for the compact-model split; `None` reuses `seed`.
    pub compact_seed: Option<u64>,
    pub train_fraction: f64,
    pub importance_repeats: usize,
    pub cv_folds: usize,
    pub threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            top_k: 100,
            exclusion_list: BTreeSet::new(),
            always_include: Vec::new(),
            wide_config: TrainConfig::wide(),
            compact_config: TrainConfig::diagnosis(),
            seed: 0,
            compact_seed: None,
            train_fraction: 0.8,
            importance_repeats: DEFAULT_REPEATS,
            cv_folds: DEFAULT_FOLDS,
            threshold: 0.5,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |m: String| Err(SelectionError::InvalidConfig(m));
        if self.top_k == 0 {
            return bad("top_k must be >= 1".into());
        }
        if let Some(f) = self.always_include.iter().find(|f| self.exclusion_list.contains(*f)) {
            return bad(format!("{f:?} is both excluded and always included"));
        }
        if self.importance_repeats == 0 {
            return bad("importance_repeats must be >= 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be >= 2".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        self.wide_config.validate()?;
        self.compact_config.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReports {
    pub prediction_values_change: ImportanceReport,
    pub loss_function_change: ImportanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: SelectionConfig,
    pub dataset: DatasetFingerprint,
    pub library_version: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub intersection: Vec<String>,
    pub after_exclusion: Vec<String>,
    pub final_features: Vec<String>,
    pub reports: SelectionReports,
    pub provenance: Provenance,
}

impl SelectionResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("selection result serializes");
        s.push('\n');
        s
    }
}

/// Everything `run_pipeline` produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub selection: SelectionResult,
    pub wide_model: GbdtModel,
    pub compact_model: GbdtModel,
    pub validation: MetricsReport,
    pub cv: CvSummary,
}

/// Features in both top-`k` lists, ordered by their rank in `r1`.
pub fn intersect_top_k(
    r1: &ImportanceReport,
    r2: &ImportanceReport,
    k: usize,
) -> Result<Vec<String>, SelectionError> {
    let universe = |r: &ImportanceReport| -> BTreeSet<String> {
        r.scores.iter().map(|s| s.feature.clone()).collect()
    };
    if r1.scores.len() != r2.scores.len() || universe(r1) != universe(r2) {
        return Err(SelectionError::FeatureUniverseMismatch);
    }
    let second: HashSet<String> = top_k(r2, k).into_iter().collect();
    Ok(top_k(r1, k).into_iter().filter(|f| second.contains(f)).collect())
}

/// Order-preserving removal. The second list holds excluded names that did
/// not occur in `features`.
pub fn apply_exclusions(
    features: &[String],
    exclusion_list: &BTreeSet<String>,
) -> (Vec<String>, Vec<String>) {
    let kept = features
        .iter()
        .filter(|f| !exclusion_list.contains(*f))
        .cloned()
        .collect();
    let absent = exclusion_list
        .iter()
        .filter(|e| !features.contains(e))
        .cloned()
        .collect();
    (kept, absent)
}

pub fn run_pipeline(d: &DatasetMatrix, cfg: &SelectionConfig) -> Result<PipelineOutput, SelectionError> {
    cfg.validate()?;
    d.require_complete()?;
    d.class_counts().require_both()?;
    if let Some(f) = cfg.always_include.iter().find(|f| d.feature_index(f).is_none()) {
        return Err(SelectionError::UnknownFeature(f.clone()));
    }

    let split = stratified_split(d.labels(), cfg.train_fraction, cfg.seed)?;
    let train = d.select_rows(&split.train_indices)?;
    let wide_model = fit(&train, &cfg.wide_config)?;

    let weights = wide_model.class_weights.row_weights(train.labels());
    let reports = SelectionReports {
        prediction_values_change: prediction_values_change(&wide_model)?,
        loss_function_change: loss_function_change(
            &wide_model,
            &train,
            &weights,
            cfg.importance_repeats,
            cfg.seed,
        )?,
    };

    let intersection = intersect_top_k(
        &reports.prediction_values_change,
        &reports.loss_function_change,
        cfg.top_k,
    )?;
    let (after_exclusion, absent) = apply_exclusions(&intersection, &cfg.exclusion_list);
    if after_exclusion.is_empty() {
        return Err(SelectionError::EmptySelection {
            top_k: cfg.top_k,
            reports: Box::new(reports),
        });
    }
    let warnings = absent
        .into_iter()
        .map(|f| format!("excluded feature {f:?} was not in the intersection"))
        .collect();

    let mut final_features = after_exclusion.clone();
    for f in &cfg.always_include {
        if !final_features.contains(f) {
            final_features.push(f.clone());
        }
    }

    let projected = d.project(&final_features)?;
    let compact_split = stratified_split(
        projected.labels(),
        cfg.train_fraction,
        cfg.compact_seed.unwrap_or(cfg.seed),
    )?;
    let compact_train = projected.select_rows(&compact_split.train_indices)?;
    let compact_valid = projected.select_rows(&compact_split.validation_indices)?;
    let compact_model = fit(&compact_train, &cfg.compact_config)?;
    let validation = evaluate(
        &TrainedModel::Gbdt(compact_model.clone()),
        &compact_valid,
        cfg.threshold,
    )?
    .report;
    let cv = cross_validate(
        &ModelSpec::Gbdt(cfg.compact_config.clone()),
        &compact_train,
        cfg.cv_folds,
        cfg.seed,
        cfg.threshold,
    )?;

    Ok(PipelineOutput {
        selection: SelectionResult {
            intersection,
            after_exclusion,
            final_features,
            reports,
            provenance: Provenance {
                config: cfg.clone(),
                dataset: d.fingerprint(),
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                warnings,
            },
        },
        wide_model,
        compact_model,
        validation,
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::{ImportanceMethod, Normalization};
    use crate::synth::{planted_dataset, PlantedSpec};

    fn report(names: &[&str], scores: &[f64]) -> ImportanceReport {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        ImportanceReport::new(
            ImportanceMethod::PredictionValuesChange,
            Normalization::Raw,
            &names,
            scores.to_vec(),
        )
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn intersection_in_first_report_order() {
        let r1 = report(&["a", "b", "c", "d"], &[4.0, 3.0, 2.0, 1.0]);
        let r2 = report(&["a", "b", "c", "d"], &[0.0, 3.0, 2.0, 5.0]);
        assert_eq!(intersect_top_k(&r1, &r2, 3).unwrap(), strings(&["b", "c"]));
        assert_eq!(intersect_top_k(&r1, &r1, 3).unwrap(), strings(&["a", "b", "c"]));
        assert_eq!(intersect_top_k(&r1, &r1, 10).unwrap().len(), 4);
    }

    #[test]
    fn mismatched_universe() {
        let r1 = report(&["a", "b"], &[1.0, 2.0]);
        let r2 = report(&["a", "c"], &[1.0, 2.0]);
        assert!(matches!(
            intersect_top_k(&r1, &r2, 2),
            Err(SelectionError::FeatureUniverseMismatch)
        ));
    }

    #[test]
    fn exclusions_preserve_order() {
        let ex: BTreeSet<String> = ["b".to_string(), "zz".to_string()].into();
        let (kept, absent) = apply_exclusions(&strings(&["a", "b", "c"]), &ex);
        assert_eq!(kept, strings(&["a", "c"]));
        assert_eq!(absent, strings(&["zz"]));
        let (same, none) = apply_exclusions(&strings(&["a", "b"]), &BTreeSet::new());
        assert_eq!(same, strings(&["a", "b"]));
        assert!(none.is_empty());
    }

    #[test]
    fn config_rejects_overlap_and_zero_k() {
        let mut cfg = SelectionConfig { always_include: strings(&["age"]), ..Default::default() };
        cfg.exclusion_list.insert("age".into());
        assert!(matches!(cfg.validate(), Err(SelectionError::InvalidConfig(_))));
        let cfg = SelectionConfig { top_k: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(SelectionError::InvalidConfig(_))));
    }

    fn quick(top_k: usize) -> SelectionConfig {
        SelectionConfig {
            top_k,
            wide_config: TrainConfig { iterations: 40, depth: 4, ..TrainConfig::wide() },
            compact_config: TrainConfig { iterations: 30, depth: 3, ..TrainConfig::wide() },
            cv_folds: 3,
            importance_repeats: 2,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn pipeline_subset_chain_and_age() {
        let spec = PlantedSpec { rows: 120, features: 12, informative: 3, age_missing_fraction: Some(0.0), ..PlantedSpec::default() };
        let (d, truth) = planted_dataset(&spec, 8);
        let mut cfg = quick(6);
        cfg.always_include = strings(&["age"]);
        let out = run_pipeline(&d, &cfg).unwrap();
        let sel = &out.selection;
        let k1 = top_k(&sel.reports.prediction_values_change, 6);
        let k2 = top_k(&sel.reports.loss_function_change, 6);
        assert!(sel.intersection.iter().all(|f| k1.contains(f) && k2.contains(f)));
        assert_eq!(sel.after_exclusion, sel.intersection);
        assert_eq!(sel.final_features.last().map(String::as_str), Some("age"));
        let unique: HashSet<_> = sel.final_features.iter().collect();
        assert_eq!(unique.len(), sel.final_features.len());
        assert_eq!(out.compact_model.feature_names, sel.final_features);
        for t in &truth {
            assert!(sel.final_features.contains(t), "missing {t}");
        }
        assert_eq!(sel.provenance.dataset.rows, 120);
    }

    #[test]
    fn excluding_everything_is_empty_selection() {
        let spec = PlantedSpec { rows: 80, features: 6, informative: 2, ..PlantedSpec::default() };
        let (d, _) = planted_dataset(&spec, 1);
        let mut cfg = quick(6);
        cfg.exclusion_list = d.feature_names().iter().cloned().collect();
        match run_pipeline(&d, &cfg) {
            Err(SelectionError::EmptySelection { reports, .. }) => {
                assert_eq!(reports.prediction_values_change.scores.len(), 6);
            }
            other => panic!("unexpected {:?}", other.map(|o| o.selection.final_features)),
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let spec = PlantedSpec { rows: 80, features: 8, informative: 2, ..PlantedSpec::default() };
        let (d, _) = planted_dataset(&spec, 2);
        let a = run_pipeline(&d, &quick(4)).unwrap();
        let b = run_pipeline(&d, &quick(4)).unwrap();
        assert_eq!(a.selection.to_json(), b.selection.to_json());
        assert_eq!(a.compact_model, b.compact_model);
    }
}
