use rayon::prelude::*;

use super::DatasetMatrix;

pub const DEFAULT_MAX_BINS: usize = 255;

/// Quantile-discretized copy of a dataset, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDataset {
    bin_edges: Vec<Vec<f64>>,
    bins: Vec<Vec<u16>>,
    source_feature_names: Vec<String>,
    n_rows: usize,
}

impl BinnedDataset {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bin_edges.len()
    }

    pub fn source_feature_names(&self) -> &[String] {
        &self.source_feature_names
    }

    /// Ascending split thresholds for `feature`.
    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.bin_edges[feature]
    }

    /// Bin ids of every row for `feature`.
    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature]
    }

    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[feature][row]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.bin_edges[feature].len() + 1
    }
}

/// Number of edges `<= value`.
pub fn bin_of(edges: &[f64], value: f64) -> u16 {
    edges.partition_point(|&e| e <= value) as u16
}

/// Edges are midpoints between the value at each quantile `i / max_bins` and
/// the next larger distinct value. A constant column has no edges.
pub(crate) fn quantile_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::new();
    if n == 0 {
        return edges;
    }
    for i in 1..max_bins {
        let idx = ((i * n).div_ceil(max_bins)).saturating_sub(1).min(n - 1);
        let v = sorted[idx];
        let next = sorted.partition_point(|&x| x <= v);
        if next >= n {
            continue;
        }
        let u = sorted[next];
        let mid = v + (u - v) / 2.0;
        // adjacent floats have no representable midpoint
        if !(mid > v && mid < u) {
            continue;
        }
        if edges.last() != Some(&mid) {
            edges.push(mid);
        }
    }
    edges
}

/// Bins every feature on its own quantile edges (`max_bins >= 2`).
pub fn quantile_bin(d: &DatasetMatrix, max_bins: usize) -> BinnedDataset {
    assert!(
        (2..=u16::MAX as usize).contains(&max_bins),
        "max_bins must lie in 2..=65535"
    );
    let per_feature: Vec<(Vec<f64>, Vec<u16>)> = (0..d.n_features())
        .into_par_iter()
        .map(|f| {
            let column = d.column(f);
            let edges = quantile_edges(&column, max_bins);
            let bins = column.iter().map(|&v| bin_of(&edges, v)).collect();
            (edges, bins)
        })
        .collect();
    let (bin_edges, bins) = per_feature.into_iter().unzip();
    BinnedDataset {
        bin_edges,
        bins,
        source_feature_names: d.feature_names().to_vec(),
        n_rows: d.n_rows(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Class;
    use proptest::prelude::*;

    fn one_column(values: &[f64]) -> DatasetMatrix {
        DatasetMatrix::new(
            vec!["f".into()],
            values.iter().map(|&v| vec![v]).collect(),
            (0..values.len()).map(|i| Class::from(i % 2 == 0)).collect(),
            (0..values.len()).map(|i| i.to_string()).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_feature_has_single_bin() {
        let b = quantile_bin(&one_column(&[1.0, 1.0, 1.0]), 255);
        assert!(b.edges(0).is_empty());
        assert_eq!(b.column(0), &[0, 0, 0]);
    }

    #[test]
    fn median_midpoint_with_two_bins() {
        let b = quantile_bin(&one_column(&[1.0, 2.0, 3.0, 4.0]), 2);
        assert_eq!(b.edges(0), &[2.5]);
        assert_eq!(b.column(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn few_distinct_values_get_every_midpoint() {
        let b = quantile_bin(&one_column(&[3.0, 1.0, 2.0, 2.0, 1.0]), 255);
        assert_eq!(b.edges(0), &[1.5, 2.5]);
        assert_eq!(b.column(0), &[2, 0, 1, 1, 0]);
    }

    #[test]
    fn edge_count_capped() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let b = quantile_bin(&one_column(&values), 16);
        assert!(b.edges(0).len() <= 15);
        let distinct: std::collections::BTreeSet<u16> = b.column(0).iter().copied().collect();
        assert!(distinct.len() <= b.edges(0).len() + 1);
    }

    proptest! {
        #[test]
        fn edges_ascending_and_bins_monotone(values in prop::collection::vec(-50i32..50, 1..120), max_bins in 2usize..40) {
            let vals: Vec<f64> = values.iter().map(|&v| v as f64 / 4.0).collect();
            let b = quantile_bin(&one_column(&vals), max_bins);
            let e = b.edges(0);
            prop_assert!(e.len() < max_bins);
            prop_assert!(e.windows(2).all(|w| w[0] < w[1]));
            for (i, &v1) in vals.iter().enumerate() {
                prop_assert!((b.bin(i, 0) as usize) < e.len() + 1);
                for (j, &v2) in vals.iter().enumerate() {
                    if v1 <= v2 {
                        prop_assert!(b.bin(i, 0) <= b.bin(j, 0));
                    }
                }
                // no training value sits exactly on an edge
                prop_assert!(!e.contains(&v1));
            }
        }
    }
}
