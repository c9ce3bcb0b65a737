//! Gradient-boosted oblivious decision trees for class-weighted logistic loss.

mod persist;
mod train;

pub use persist::{load_model, save_model, MODEL_SCHEMA_VERSION};
pub use train::{fit, train};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Class, ClassCounts, DatasetError};

#[derive(Debug, Error)]
pub enum BoostingError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} feature values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("decision threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    None,
    #[default]
    Balanced,
}

impl std::str::FromStr for ClassWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ClassWeighting::None),
            "balanced" => Ok(ClassWeighting::Balanced),
            other => Err(format!("unknown class weighting `{other}` (none|balanced)")),
        }
    }
}

/// Multiplicative per-class sample weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        positive: 1.0,
        negative: 1.0,
    };

    pub fn of(&self, class: Class) -> f64 {
        match class {
            Class::Positive => self.positive,
            Class::Negative => self.negative,
        }
    }

    /// Row weights for `labels` under these class weights.
    pub fn row_weights(&self, labels: &[Class]) -> Vec<f64> {
        labels.iter().map(|&c| self.of(c)).collect()
    }
}

/// `balanced` gives class c the weight `N / (2 * N_c)`.
pub fn class_weights(labels: &[Class], mode: ClassWeighting) -> Result<ClassWeights, BoostingError> {
    match mode {
        ClassWeighting::None => Ok(ClassWeights::UNIT),
        ClassWeighting::Balanced => {
            let counts = ClassCounts::of(labels);
            counts.require_both()?;
            let n = counts.total() as f64;
            Ok(ClassWeights {
                positive: n / (2.0 * counts.positive as f64),
                negative: n / (2.0 * counts.negative as f64),
            })
        }
    }
}

/// Same as [`class_weights`] but on weighted class mass, so that a row of
/// weight 2 counts like two rows.
pub(crate) fn class_weights_by_mass(
    labels: &[Class],
    sample_weights: &[f64],
    mode: ClassWeighting,
) -> Result<ClassWeights, BoostingError> {
    let (mut pos, mut neg) = (0.0, 0.0);
    for (&c, &w) in labels.iter().zip(sample_weights) {
        if c.is_positive() {
            pos += w;
        } else {
            neg += w;
        }
    }
    if !(pos > 0.0 && neg > 0.0) {
        let counts = ClassCounts::of(labels);
        return Err(DatasetError::DegenerateLabels {
            positives: counts.positive,
            negatives: counts.negative,
        }
        .into());
    }
    Ok(match mode {
        ClassWeighting::None => ClassWeights::UNIT,
        ClassWeighting::Balanced => {
            let total = pos + neg;
            ClassWeights {
                positive: total / (2.0 * pos),
                negative: total / (2.0 * neg),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    pub class_weighting: ClassWeighting,
    /// Recorded for provenance; plain boosting draws no random numbers.
    pub seed: u64,
    pub max_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::wide()
    }
}

impl TrainConfig {
    pub const MAX_DEPTH: usize = 16;

    /// 200 iterations, depth 6: the wide dimensionality-reduction model.
    pub fn wide() -> Self {
        TrainConfig {
            iterations: 200,
            depth: 6,
            learning_rate: 0.1,
            l2_leaf_reg: 3.0,
            class_weighting: ClassWeighting::Balanced,
            seed: 0,
            max_bins: crate::dataset::DEFAULT_MAX_BINS,
        }
    }

    /// 200 iterations, depth 5: the model on the intersected features.
    pub fn intersected() -> Self {
        TrainConfig {
            depth: 5,
            ..TrainConfig::wide()
        }
    }

    /// 100 iterations, depth 11: the final diagnosis model.
    pub fn diagnosis() -> Self {
        TrainConfig {
            iterations: 100,
            depth: 11,
            ..TrainConfig::wide()
        }
    }

    pub fn validate(&self) -> Result<(), BoostingError> {
        let bad = |m: String| Err(BoostingError::InvalidConfig(m));
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.depth < 1 || self.depth > Self::MAX_DEPTH {
            return bad(format!("depth must lie in 1..={}, got {}", Self::MAX_DEPTH, self.depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad(format!("l2_leaf_reg must be >= 0, got {}", self.l2_leaf_reg));
        }
        if self.max_bins < 2 || self.max_bins > u16::MAX as usize {
            return bad(format!("max_bins must lie in 2..=65535, got {}", self.max_bins));
        }
        Ok(())
    }
}

/// One level of an oblivious tree. A null split has `threshold = +inf`, so
/// every row takes the left branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub feature: usize,
    pub threshold: f64,
    /// Split gain realized during training; absent in models from files
    /// without gain records.
    pub gain: Option<f64>,
}

impl Level {
    pub fn null() -> Self {
        Level {
            feature: 0,
            threshold: f64::INFINITY,
            gain: Some(0.0),
        }
    }

    pub fn is_null(&self) -> bool {
        self.threshold == f64::INFINITY
    }
}

/// Symmetric tree: every node of a level shares one split, so a row's leaf is
/// the bit-string of its per-level comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousTree {
    pub levels: Vec<Level>,
    /// `2^depth` log-odds increments, learning rate already applied.
    pub leaf_values: Vec<f64>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Bit `l` is set iff `row[feature_l] > threshold_l`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        self.levels
            .iter()
            .enumerate()
            .fold(0usize, |acc, (l, lvl)| {
                acc | (((row[lvl.feature] > lvl.threshold) as usize) << l)
            })
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        self.leaf_values[self.leaf_index(row)]
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.levels
            .iter()
            .any(|l| !l.is_null() && l.feature == feature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub trees: Vec<ObliviousTree>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub class_weights: ClassWeights,
    pub config: TrainConfig,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted mean logistic loss for raw (log-odds) scores.
pub fn weighted_logloss(raw: &[f64], labels: &[Class], weights: &[f64]) -> f64 {
    let mut loss = 0.0;
    let mut total = 0.0;
    for ((&r, &c), &w) in raw.iter().zip(labels).zip(weights) {
        loss += w * (softplus(r) - c.target() * r);
        total += w;
    }
    loss / total
}

const PROBA_LOW: f64 = f64::MIN_POSITIVE;
const PROBA_HIGH: f64 = 1.0 - f64::EPSILON / 2.0;

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_arity(&self, row: &[f64]) -> Result<(), BoostingError> {
        if row.len() != self.n_features() {
            return Err(BoostingError::DimensionMismatch {
                expected: self.n_features(),
                found: row.len(),
            });
        }
        Ok(())
    }

    /// Raw score using only the first `n_trees` trees.
    pub fn predict_raw_staged(&self, row: &[f64], n_trees: usize) -> Result<f64, BoostingError> {
        self.check_arity(row)?;
        Ok(self
            .trees
            .iter()
            .take(n_trees)
            .fold(self.base_score, |acc, t| acc + t.leaf_value(row)))
    }

    /// `base_score + sum of leaf values`, in log-odds.
    pub fn predict_raw(&self, row: &[f64]) -> Result<f64, BoostingError> {
        self.predict_raw_staged(row, self.trees.len())
    }

    /// Probability of the positive class, strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, BoostingError> {
        Ok(sigmoid(self.predict_raw(row)?).clamp(PROBA_LOW, PROBA_HIGH))
    }

    /// Positive iff the probability is `>= threshold`.
    pub fn predict_label(&self, row: &[f64], threshold: f64) -> Result<Class, BoostingError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(BoostingError::InvalidThreshold(threshold));
        }
        Ok(Class::from(self.predict_proba(row)? >= threshold))
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.trees.iter().any(|t| t.uses_feature(feature))
    }

    /// Checks structural invariants (leaf counts, feature indices).
    pub fn validate(&self) -> Result<(), String> {
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.depth() > TrainConfig::MAX_DEPTH {
                return Err(format!("tree {t} deeper than {}", TrainConfig::MAX_DEPTH));
            }
            if tree.leaf_values.len() != 1 << tree.depth() {
                return Err(format!(
                    "tree {t} has {} leaves for depth {}",
                    tree.leaf_values.len(),
                    tree.depth()
                ));
            }
            for lvl in &tree.levels {
                if lvl.feature >= self.n_features() {
                    return Err(format!("tree {t} splits on unknown feature {}", lvl.feature));
                }
                if lvl.threshold.is_nan() {
                    return Err(format!("tree {t} has a NaN threshold"));
                }
            }
            if tree.leaf_values.iter().any(|v| !v.is_finite()) {
                return Err(format!("tree {t} has a non-finite leaf value"));
            }
        }
        if !self.base_score.is_finite() {
            return Err("non-finite base score".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(leaves: [f64; 2], threshold: f64) -> GbdtModel {
        GbdtModel {
            trees: vec![ObliviousTree {
                levels: vec![Level {
                    feature: 0,
                    threshold,
                    gain: Some(1.0),
                }],
                leaf_values: leaves.to_vec(),
            }],
            base_score: 0.0,
            learning_rate: 0.1,
            feature_names: vec!["a".into(), "b".into()],
            class_weights: ClassWeights::UNIT,
            config: TrainConfig::wide(),
        }
    }

    #[test]
    fn class_weights_examples() {
        let mut labels = vec![Class::Positive; 50];
        labels.extend(vec![Class::Negative; 50]);
        assert_eq!(
            class_weights(&labels, ClassWeighting::Balanced).unwrap(),
            ClassWeights::UNIT
        );

        let mut labels = vec![Class::Positive; 1629];
        labels.extend(vec![Class::Negative; 548]);
        let w = class_weights(&labels, ClassWeighting::Balanced).unwrap();
        assert!((w.positive - 2177.0 / 3258.0).abs() < 1e-15);
        assert!((w.negative - 2177.0 / 1096.0).abs() < 1e-15);
        assert!((w.positive - 0.6682).abs() < 5e-5);
        assert!((w.negative - 1.9863).abs() < 5e-5);
        // balanced weights give both classes mass N/2
        assert!((w.positive * 1629.0 - 2177.0 / 2.0).abs() < 1e-9);

        assert_eq!(
            class_weights(&[Class::Positive], ClassWeighting::None).unwrap(),
            ClassWeights::UNIT
        );
        assert!(class_weights(&[Class::Positive], ClassWeighting::Balanced).is_err());
    }

    #[test]
    fn zero_leaves_predict_base_score() {
        let mut m = stump([0.0, 0.0], 1.0);
        m.base_score = -0.7;
        assert_eq!(m.predict_proba(&[5.0, 0.0]).unwrap(), sigmoid(-0.7));
    }

    #[test]
    fn single_leaf_value_through_link() {
        let m = stump([0.0, 0.4], 1.0);
        let p = m.predict_proba(&[2.0, 0.0]).unwrap();
        // 1 / (1 + e^-0.4)
        assert!((p - 0.598_687_660_112_452_3).abs() < 1e-15);
        assert!((p - 0.5987).abs() < 5e-5);
    }

    #[test]
    fn wrong_arity_rejected() {
        let m = stump([0.0, 0.4], 1.0);
        assert!(matches!(
            m.predict_proba(&[1.0]),
            Err(BoostingError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn label_threshold_conventions() {
        let m = stump([0.0, 0.0], 1.0);
        // proba exactly 0.5
        assert_eq!(m.predict_label(&[0.0, 0.0], 0.5).unwrap(), Class::Positive);
        let low = stump([(0.2f64 / 0.8).ln(), 0.0], 1.0);
        assert_eq!(low.predict_label(&[0.0, 0.0], 0.5).unwrap(), Class::Negative);
        let high = stump([(0.9f64 / 0.1).ln(), 0.0], 1.0);
        assert_eq!(high.predict_label(&[0.0, 0.0], 0.95).unwrap(), Class::Negative);
        assert_eq!(high.predict_label(&[0.0, 0.0], 0.5).unwrap(), Class::Positive);
        assert!(matches!(
            m.predict_label(&[0.0, 0.0], 1.0),
            Err(BoostingError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn probability_strictly_inside_unit_interval() {
        for raw in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            let m = stump([raw, raw], 1.0);
            let p = m.predict_proba(&[0.0, 0.0]).unwrap();
            assert!(p > 0.0 && p < 1.0, "raw {raw} gave {p}");
        }
    }

    #[test]
    fn null_level_sends_everything_left() {
        let tree = ObliviousTree {
            levels: vec![Level::null(), Level { feature: 1, threshold: 0.0, gain: None }],
            leaf_values: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert_eq!(tree.leaf_index(&[1e300, 1.0]), 2);
        assert_eq!(tree.leaf_index(&[1e300, -1.0]), 0);
        assert!(!tree.uses_feature(0));
        assert!(tree.uses_feature(1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::diagnosis().validate().is_ok());
        let bad = TrainConfig { depth: 17, ..TrainConfig::wide() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 1.5, ..TrainConfig::wide() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { iterations: 0, ..TrainConfig::wide() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn presets_match_reported_hyperparameters() {
        let w = TrainConfig::wide();
        assert_eq!((w.iterations, w.depth, w.learning_rate), (200, 6, 0.1));
        let i = TrainConfig::intersected();
        assert_eq!((i.iterations, i.depth, i.learning_rate), (200, 5, 0.1));
        let d = TrainConfig::diagnosis();
        assert_eq!((d.iterations, d.depth, d.learning_rate), (100, 11, 0.1));
    }
}
