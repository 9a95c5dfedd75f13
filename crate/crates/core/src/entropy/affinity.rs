//! Inter-sample entropy: exponential kNN affinities, symmetrized into a joint
//! probability table over sample pairs.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use super::distance::knn_table;
use super::shannon::entropy_bits;
use super::sigma::solve_sigma;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 15;

/// Neighborhoods and fitted bandwidths for every sample.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothKnnParams {
    pub k: usize,
    pub sigma: Vec<f64>,
    /// Samples whose bandwidth equation had no root (see [`solve_sigma`]).
    pub degenerate: Vec<bool>,
    pub neighbor_ids: Array2<usize>,
    pub neighbor_dists: Array2<f64>,
}

/// Conditional memberships `P(j | i)` stored alongside `neighbor_ids`.
#[derive(Debug, Clone)]
pub struct ConditionalAffinity {
    pub n: usize,
    pub params: SmoothKnnParams,
    /// `values[[i, m]] = P(neighbor_ids[[i, m]] | i)`.
    pub values: Array2<f64>,
}

impl ConditionalAffinity {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.params
            .neighbor_ids
            .row(i)
            .iter()
            .position(|&id| id == j)
            .map(|m| self.values[[i, m]])
    }
}

/// Symmetric, normalized joint probabilities over ordered sample pairs.
///
/// Entries are kept sorted by `(i, j)`; both `(i, j)` and `(j, i)` are stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseAffinity {
    pub n: usize,
    pub entries: Vec<((usize, usize), f64)>,
}

impl PairwiseAffinity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by(|(key, _)| key.cmp(&(i, j)))
            .map(|idx| self.entries[idx].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }
}

/// `P(j | i) = exp(-|x_i - x_j| / sigma_i)` over each sample's `k` nearest
/// neighbors.
pub fn knn_affinities(points: ArrayView2<'_, f64>, k: usize) -> Result<ConditionalAffinity> {
    let n = points.nrows();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if n < k + 1 {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: n,
        });
    }
    let (neighbor_ids, neighbor_dists) = knn_table(points, k)?;

    let solutions = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = neighbor_dists.row(i);
            solve_sigma(row.as_slice().expect("owned rows are contiguous"), k)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Array2::<f64>::zeros((n, k));
    for (i, sol) in solutions.iter().enumerate() {
        for m in 0..k {
            values[[i, m]] = (-neighbor_dists[[i, m]] / sol.sigma).exp();
        }
    }

    Ok(ConditionalAffinity {
        n,
        params: SmoothKnnParams {
            k,
            sigma: solutions.iter().map(|s| s.sigma).collect(),
            degenerate: solutions.iter().map(|s| s.degenerate).collect(),
            neighbor_ids,
            neighbor_dists,
        },
        values,
    })
}

/// `P(i, j) = (P(j | i) + P(i | j)) / 2N`, then rescaled so all stored
/// ordered pairs sum to one. Pairs outside both neighborhoods stay absent.
pub fn symmetrize_normalize(cond: &ConditionalAffinity) -> PairwiseAffinity {
    let n = cond.n;
    let scale = 2.0 * n as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for (m, &j) in cond.params.neighbor_ids.row(i).iter().enumerate() {
            let v = cond.values[[i, m]] / scale;
            *table.entry((i, j)).or_insert(0.0) += v;
            *table.entry((j, i)).or_insert(0.0) += v;
        }
    }
    let total: f64 = table.values().sum();
    let entries = if total > 0.0 {
        table.into_iter().map(|(key, v)| (key, v / total)).collect()
    } else {
        table.into_iter().collect()
    };
    PairwiseAffinity { n, entries }
}

/// `-sum P(i, j) log2 P(i, j)` over all stored ordered pairs.
pub fn pairwise_entropy(affinity: &PairwiseAffinity) -> f64 {
    entropy_bits(affinity.entries.iter().map(|(_, v)| *v))
}

/// Inter-sample entropy (bits) of a point cloud, one sample per row.
pub fn inter_sample_entropy(points: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    let cond = knn_affinities(points, k)?;
    Ok(pairwise_entropy(&symmetrize_normalize(&cond)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn middle_point_of_a_line_splits_evenly() {
        let pts = array![[0.0], [1.0], [2.0]];
        let cond = knn_affinities(pts.view(), 2).unwrap();
        assert!((cond.params.sigma[1] - 1.0 / std::f64::consts::LN_2).abs() < 1e-9);
        assert!((cond.get(1, 0).unwrap() - 0.5).abs() < 1e-9);
        assert!((cond.get(1, 2).unwrap() - 0.5).abs() < 1e-9);
        assert!(cond.get(1, 1).is_none());
    }

    #[test]
    fn nearest_neighbor_has_row_maximum() {
        let pts = array![[0.0, 0.0], [0.3, 0.1], [2.0, 1.0], [5.0, -1.0], [1.0, 1.0]];
        let cond = knn_affinities(pts.view(), 3).unwrap();
        for i in 0..5 {
            let row = cond.values.row(i);
            assert!(row.iter().all(|v| *v <= row[0] && *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn one_sided_neighbor_gets_half_weight_before_normalization() {
        // 3 is far away: it lists 2 as a neighbor but 2 does not list 3.
        let pts = array![[0.0], [1.0], [2.0], [10.0]];
        let cond = knn_affinities(pts.view(), 2).unwrap();
        assert!(cond.get(2, 3).is_none());
        let p_23 = cond.get(3, 2).unwrap();
        let joint = symmetrize_normalize(&cond);
        let raw_total: f64 = cond.values.iter().sum::<f64>() * 2.0 / 8.0;
        let expected = p_23 / 8.0 / raw_total;
        assert!((joint.get(2, 3) - expected).abs() < 1e-12);
        assert_eq!(joint.get(2, 3), joint.get(3, 2));
    }

    #[test]
    fn joint_table_is_symmetric_and_normalized() {
        let pts = array![[0.0, 1.0], [0.5, 0.2], [3.0, 1.0], [2.0, 2.0], [0.1, 0.9], [4.0, 4.0]];
        let joint = symmetrize_normalize(&knn_affinities(pts.view(), 2).unwrap());
        assert!((joint.total() - 1.0).abs() < 1e-9);
        for ((i, j), v) in &joint.entries {
            assert_ne!(i, j);
            assert!(*v >= 0.0);
            assert_eq!(*v, joint.get(*j, *i));
        }
    }

    #[test]
    fn too_few_samples_for_k() {
        let pts = array![[0.0], [1.0], [2.0]];
        assert!(matches!(
            knn_affinities(pts.view(), 3),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
