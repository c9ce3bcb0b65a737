use rayon::prelude::*;

use super::{
    class_weights_by_mass, sigmoid, BoostingError, GbdtModel, Level, ObliviousTree, TrainConfig,
};
use crate::dataset::{quantile_bin, BinnedDataset, Class, DatasetMatrix};

/// Bins `data` with `config.max_bins` and trains with unit sample weights.
pub fn fit(data: &DatasetMatrix, config: &TrainConfig) -> Result<GbdtModel, BoostingError> {
    config.validate()?;
    data.require_complete()?;
    let binned = quantile_bin(data, config.max_bins);
    let ones = vec![1.0; data.n_rows()];
    train(&binned, data.labels(), &ones, config)
}

/// Newton boosting of oblivious trees on weighted logistic loss.
///
/// The effective row weight is `sample_weights[i]` times the class weight from
/// `config.class_weighting` (computed on weighted class mass).
pub fn train(
    binned: &BinnedDataset,
    labels: &[Class],
    sample_weights: &[f64],
    config: &TrainConfig,
) -> Result<GbdtModel, BoostingError> {
    config.validate()?;
    let n = binned.n_rows();
    for (what, len) in [("labels", labels.len()), ("sample weights", sample_weights.len())] {
        if len != n {
            return Err(BoostingError::LengthMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    if sample_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(BoostingError::InvalidConfig(
            "sample weights must be finite and non-negative".into(),
        ));
    }
    let class_weights = class_weights_by_mass(labels, sample_weights, config.class_weighting)?;
    if n < 2 {
        return Err(BoostingError::InvalidConfig("need at least 2 rows".into()));
    }

    let weights: Vec<f64> = labels
        .iter()
        .zip(sample_weights)
        .map(|(&c, &s)| s * class_weights.of(c))
        .collect();
    let targets: Vec<f64> = labels.iter().map(|c| c.target()).collect();
    let (mut w_pos, mut w_neg) = (0.0, 0.0);
    for (&y, &w) in targets.iter().zip(&weights) {
        if y > 0.5 {
            w_pos += w;
        } else {
            w_neg += w;
        }
    }
    let base_score = (w_pos / w_neg).ln();

    let order = bin_order(binned);
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = weights[i] * (p - targets[i]);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let (tree, leaf_of_row) = grow_tree(binned, &order, &grad, &hess, config);
        for (r, &leaf) in raw.iter_mut().zip(&leaf_of_row) {
            *r += tree.leaf_values[leaf as usize];
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        trees,
        base_score,
        learning_rate: config.learning_rate,
        feature_names: binned.source_feature_names().to_vec(),
        class_weights,
        config: config.clone(),
    })
}

/// Row indices of each feature sorted by bin, ties by row index.
fn bin_order(binned: &BinnedDataset) -> Vec<Vec<u32>> {
    (0..binned.n_features())
        .into_par_iter()
        .map(|f| {
            let col = binned.column(f);
            let mut idx: Vec<u32> = (0..col.len() as u32).collect();
            idx.sort_by_key(|&r| col[r as usize]);
            idx
        })
        .collect()
}

fn score_term(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

/// Best `(gain, edge)` for one feature, where the gain of an edge is summed
/// over all current leaves.
///
/// Rows are visited in bin order. For each leaf the gain is piecewise constant
/// between its occupied bins, so contributions go into a difference array and
/// a prefix sum yields the gain of every edge in one pass.
#[allow(clippy::too_many_arguments)]
fn best_edge(
    order: &[u32],
    bins: &[u16],
    n_bins: usize,
    leaf_of_row: &[u32],
    grad: &[f64],
    hess: &[f64],
    parent: &[(f64, f64)],
    lambda: f64,
) -> Option<(f64, usize)> {
    if n_bins < 2 {
        return None;
    }
    let n_leaves = parent.len();
    let mut acc = vec![(0.0f64, 0.0f64); n_leaves];
    let mut count = vec![0usize; n_leaves];
    let mut cur_bin = vec![0u16; n_leaves];
    let mut prev = vec![0.0f64; n_leaves];
    let mut diff = vec![0.0f64; n_bins];

    for &r in order {
        let r = r as usize;
        let leaf = leaf_of_row[r] as usize;
        let b = bins[r];
        if count[leaf] > 0 && b != cur_bin[leaf] {
            let (gl, hl) = acc[leaf];
            let (gp, hp) = parent[leaf];
            let c = score_term(gl, hl, lambda) + score_term(gp - gl, hp - hl, lambda)
                - score_term(gp, hp, lambda);
            diff[cur_bin[leaf] as usize] += c - prev[leaf];
            prev[leaf] = c;
        }
        acc[leaf].0 += grad[r];
        acc[leaf].1 += hess[r];
        count[leaf] += 1;
        cur_bin[leaf] = b;
    }
    // past a leaf's last occupied bin its right side is empty: no change
    for leaf in 0..n_leaves {
        if count[leaf] > 0 {
            diff[cur_bin[leaf] as usize] -= prev[leaf];
        }
    }

    let mut running = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for (e, d) in diff.iter().enumerate().take(n_bins - 1) {
        running += d;
        if best.is_none_or(|(g, _)| running > g) {
            best = Some((running, e));
        }
    }
    best
}

/// Grows one oblivious tree; returns it with each row's leaf id.
fn grow_tree(
    binned: &BinnedDataset,
    order: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
) -> (ObliviousTree, Vec<u32>) {
    let n = grad.len();
    let lambda = config.l2_leaf_reg;
    let mut leaf_of_row = vec![0u32; n];
    let mut levels = Vec::with_capacity(config.depth);

    for depth in 0..config.depth {
        let parent = leaf_sums(&leaf_of_row, grad, hess, 1 << depth);
        let candidates: Vec<Option<(f64, usize)>> = (0..binned.n_features())
            .into_par_iter()
            .map(|f| {
                best_edge(
                    &order[f],
                    binned.column(f),
                    binned.n_bins(f),
                    &leaf_of_row,
                    grad,
                    hess,
                    &parent,
                    lambda,
                )
            })
            .collect();

        // fixed-order reduction: lowest feature index wins ties
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, cand) in candidates.into_iter().enumerate() {
            if let Some((gain, edge)) = cand {
                if gain > 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, edge));
                }
            }
        }

        match best {
            Some((gain, f, edge)) => {
                let col = binned.column(f);
                for (leaf, &b) in leaf_of_row.iter_mut().zip(col) {
                    *leaf |= ((b as usize > edge) as u32) << depth;
                }
                levels.push(Level {
                    feature: f,
                    threshold: binned.edges(f)[edge],
                    gain: Some(gain),
                });
            }
            None => levels.push(Level::null()),
        }
    }

    let sums = leaf_sums(&leaf_of_row, grad, hess, 1 << config.depth);
    let leaf_values = sums
        .iter()
        .map(|&(g, h)| {
            let denom = h + lambda;
            if denom > 0.0 {
                -config.learning_rate * g / denom
            } else {
                0.0
            }
        })
        .collect();
    (ObliviousTree { levels, leaf_values }, leaf_of_row)
}

fn leaf_sums(leaf_of_row: &[u32], grad: &[f64], hess: &[f64], n_leaves: usize) -> Vec<(f64, f64)> {
    let mut sums = vec![(0.0, 0.0); n_leaves];
    for ((&leaf, &g), &h) in leaf_of_row.iter().zip(grad).zip(hess) {
        let s = &mut sums[leaf as usize];
        s.0 += g;
        s.1 += h;
    }
    sums
}
