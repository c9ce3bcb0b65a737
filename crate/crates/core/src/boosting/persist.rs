use std::path::Path;

use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use super::{BoostingError, ClassWeights, GbdtModel, Level, ObliviousTree, TrainConfig};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u64,
    base_score: f64,
    learning_rate: f64,
    feature_names: Vec<String>,
    trees: Vec<TreeFile>,
    class_weights: ClassWeights,
    config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    levels: Vec<LevelFile>,
    leaf_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LevelFile {
    feature: usize,
    /// `null` encodes the null split (+inf).
    #[serde(serialize_with = "write_threshold", deserialize_with = "read_threshold")]
    threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
}

/// Finite thresholds are written with 17 significant digits.
fn write_threshold<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    if *t == f64::INFINITY {
        return s.serialize_none();
    }
    if !t.is_finite() {
        return Err(S::Error::custom(format!("unserializable threshold {t}")));
    }
    let raw = RawValue::from_string(format!("{t:.16e}")).map_err(S::Error::custom)?;
    raw.serialize(s)
}

fn read_threshold<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Option::<f64>::deserialize(d)? {
        None => Ok(f64::INFINITY),
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(D::Error::custom(format!("bad threshold {v}"))),
    }
}

impl From<&GbdtModel> for ModelFile {
    fn from(m: &GbdtModel) -> Self {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            base_score: m.base_score,
            learning_rate: m.learning_rate,
            feature_names: m.feature_names.clone(),
            trees: m
                .trees
                .iter()
                .map(|t| TreeFile {
                    levels: t
                        .levels
                        .iter()
                        .map(|l| LevelFile {
                            feature: l.feature,
                            threshold: l.threshold,
                            gain: l.gain,
                        })
                        .collect(),
                    leaf_values: t.leaf_values.clone(),
                })
                .collect(),
            class_weights: m.class_weights,
            config: m.config.clone(),
        }
    }
}

impl From<ModelFile> for GbdtModel {
    fn from(f: ModelFile) -> Self {
        GbdtModel {
            trees: f
                .trees
                .into_iter()
                .map(|t| ObliviousTree {
                    levels: t
                        .levels
                        .into_iter()
                        .map(|l| Level {
                            feature: l.feature,
                            threshold: l.threshold,
                            gain: l.gain,
                        })
                        .collect(),
                    leaf_values: t.leaf_values,
                })
                .collect(),
            base_score: f.base_score,
            learning_rate: f.learning_rate,
            feature_names: f.feature_names,
            class_weights: f.class_weights,
            config: f.config,
        }
    }
}

pub(crate) fn model_to_json(model: &GbdtModel) -> Result<String, BoostingError> {
    let mut text = serde_json::to_string_pretty(&ModelFile::from(model))
        .map_err(|e| BoostingError::CorruptModel(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub(crate) fn model_from_json(text: &str) -> Result<GbdtModel, BoostingError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| BoostingError::CorruptModel(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| BoostingError::CorruptModel("missing schema_version".into()))?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(BoostingError::SchemaVersionMismatch {
            found: version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    // re-parse from text so floats keep their exact round-trip parse
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| BoostingError::CorruptModel(e.to_string()))?;
    let model = GbdtModel::from(file);
    model.validate().map_err(BoostingError::CorruptModel)?;
    Ok(model)
}

/// Writes the model as a schema-versioned JSON document.
pub fn save_model(model: &GbdtModel, path: &Path) -> Result<(), BoostingError> {
    let text = model_to_json(model)?;
    std::fs::write(path, text).map_err(|source| BoostingError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<GbdtModel, BoostingError> {
    let text = std::fs::read_to_string(path).map_err(|source| BoostingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::fit;
    use crate::dataset::{Class, DatasetMatrix};

    fn small_model() -> GbdtModel {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.77).sin() * 3.3, (i as f64 / 7.0).exp()])
            .collect();
        let labels = rows.iter().map(|r| Class::from(r[0] > 0.2)).collect();
        let d = DatasetMatrix::new(
            vec!["a".into(), "b".into()],
            rows,
            labels,
            (0..40).map(|i| format!("s{i}")).collect(),
            None,
        )
        .unwrap();
        let cfg = TrainConfig { iterations: 8, depth: 3, ..TrainConfig::wide() };
        fit(&d, &cfg).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = small_model();
        m.trees[0].levels[1] = Level::null();
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn thresholds_written_with_seventeen_digits() {
        let m = small_model();
        let text = model_to_json(&m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        let line = text.lines().find(|l| l.contains("\"threshold\"")).unwrap();
        let num = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
        let mantissa = num.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{num}");
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let text = model_to_json(&small_model()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_json(cut), Err(BoostingError::CorruptModel(_))));
    }

    #[test]
    fn unknown_schema_version() {
        let text = model_to_json(&small_model())
            .unwrap()
            .replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
        assert!(matches!(
            model_from_json(&text),
            Err(BoostingError::SchemaVersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn structurally_invalid_model_is_corrupt() {
        let mut m = small_model();
        m.trees[0].leaf_values.pop();
        let text = model_to_json(&m).unwrap();
        assert!(matches!(model_from_json(&text), Err(BoostingError::CorruptModel(_))));
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = small_model();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(
            load_model(&dir.path().join("absent.json")),
            Err(BoostingError::Io { .. })
        ));
    }
}
