use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Class, ClassCounts, DatasetError};

/// Stratified train/validation partition of row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Stratified K-fold partition of row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices outside fold `i`, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

fn round_half_up(x: f64) -> usize {
    // the epsilon absorbs representation error such as 5 * (1 - 0.9) = 0.49999...
    (x + 0.5 + 1e-9).floor() as usize
}

/// Row indices of each class, shuffled by one seeded stream (positives first).
fn shuffled_by_class(labels: &[Class], seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    [pos, neg]
}

/// Per class, `round_half_up(count * (1 - train_fraction))` rows go to validation.
pub fn stratified_split(
    labels: &[Class],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    ClassCounts::of(labels).require_both()?;

    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class_rows in shuffled_by_class(labels, seed) {
        let n_val = round_half_up(class_rows.len() as f64 * (1.0 - train_fraction))
            .min(class_rows.len());
        validation.extend_from_slice(&class_rows[..n_val]);
        train.extend_from_slice(&class_rows[n_val..]);
    }
    if train.is_empty() {
        return Err(DatasetError::EmptyPartition("train"));
    }
    if validation.is_empty() {
        return Err(DatasetError::EmptyPartition("validation"));
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitPlan {
        seed,
        train_fraction,
        train_indices: train,
        validation_indices: validation,
    })
}

/// Deals each class's shuffled rows round-robin over the folds. The dealing
/// offset carries over between classes so fold sizes also stay within one.
pub fn stratified_kfold(labels: &[Class], k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidFoldCount(k));
    }
    let counts = ClassCounts::of(labels);
    for (class, count) in [
        (Class::Positive, counts.positive),
        (Class::Negative, counts.negative),
    ] {
        if count < k {
            return Err(DatasetError::TooFewRowsPerClass { class, count, k });
        }
    }

    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class_rows in shuffled_by_class(labels, seed) {
        for (j, &row) in class_rows.iter().enumerate() {
            folds[(offset + j) % k].push(row);
        }
        offset += class_rows.len();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { seed, k, folds })
}
