//! Synthetic datasets with a known set of informative features.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Class, DatasetError, DatasetMatrix};

/// Gaussian noise features; informative ones are shifted by `shift` for
/// positive rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub rows: usize,
    pub features: usize,
    pub informative: usize,
    pub shift: f64,
    pub positive_fraction: f64,
    /// Adds an `age` column with this fraction of missing cells.
    pub age_missing_fraction: Option<f64>,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            rows: 300,
            features: 50,
            informative: 5,
            shift: 1.5,
            positive_fraction: 0.5,
            age_missing_fraction: None,
        }
    }
}

/// Returns the dataset and the names of the informative features.
pub fn planted_dataset(spec: &PlantedSpec, seed: u64) -> (DatasetMatrix, Vec<String>) {
    assert!(spec.informative <= spec.features, "more informative than total features");
    assert!(spec.rows >= 2, "need at least two rows");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = ((spec.rows as f64 * spec.positive_fraction).round() as usize).clamp(1, spec.rows - 1);
    let mut labels: Vec<Class> = (0..spec.rows).map(|i| Class::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);

    let mut informative = index::sample(&mut rng, spec.features, spec.informative).into_vec();
    informative.sort_unstable();
    let mut is_informative = vec![false; spec.features];
    for &j in &informative {
        is_informative[j] = true;
    }

    let mut names: Vec<String> = (0..spec.features).map(|j| format!("g{j:04}")).collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|c| {
            (0..spec.features)
                .map(|j| {
                    let z = normal.sample(&mut rng);
                    if is_informative[j] && c.is_positive() {
                        z + spec.shift
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect();

    let age_column = spec.age_missing_fraction.map(|frac| {
        for row in rows.iter_mut() {
            let age = if rng.random::<f64>() < frac {
                f64::NAN
            } else {
                rng.random_range(18..90) as f64
            };
            row.push(age);
        }
        names.push("age".to_string());
        spec.features
    });

    let ids = (0..spec.rows).map(|i| format!("S{i:05}")).collect();
    let truth = informative.iter().map(|&j| names[j].clone()).collect();
    let data = DatasetMatrix::new(names, rows, labels, ids, age_column).expect("well-formed synthetic data");
    (data, truth)
}

/// Writes `id,label,<features...>` with labels `AML` / `control`; missing
/// values are written as empty cells.
pub fn write_dataset_csv(data: &DatasetMatrix, path: &Path) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = String::from("id,label");
    for name in data.feature_names() {
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}").map_err(io)?;
    for (i, row) in data.rows().enumerate() {
        let label = if data.labels()[i].is_positive() { "AML" } else { "control" };
        let mut line = format!("{},{label}", data.sample_ids()[i]);
        for v in row {
            line.push(',');
            if v.is_finite() {
                line.push_str(&v.to_string());
            }
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
