//! Euclidean distances between flattened samples.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

const LANES: usize = 4;
const GRAM_BLOCK_ROWS: usize = 256;

/// Squared Euclidean distance, accumulated in a fixed lane order so the
/// result does not depend on how callers partition the work.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for l in 0..LANES {
            let d = a[base + l] - b[base + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * LANES..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Number of unordered pairs among `n` samples.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All pairwise distances `d(p, q)` for `p < q`, in row-major condensed order.
pub fn condensed_distances(points: ArrayView2<'_, f64>) -> Vec<f64> {
    let points = points.as_standard_layout();
    let n = points.nrows();
    let rows: Vec<&[f64]> = points
        .axis_iter(Axis(0))
        .map(|r| r.to_slice().expect("standard layout rows are contiguous"))
        .collect();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|p| {
            let rows = &rows;
            (p + 1..n).map(move |q| euclidean(rows[p], rows[q]))
        })
        .collect()
}

/// Exact k-nearest-neighbor table.
///
/// Row `i` lists the `k` samples closest to `i` (excluding `i`), ascending by
/// distance with ties broken by lower sample index. Candidates are screened
/// with the Gram-matrix identity `|x|^2 + |y|^2 - 2 x.y` and then re-ranked
/// on directly computed distances, so the result matches a plain double loop.
pub fn knn_table(points: ArrayView2<'_, f64>, k: usize) -> Result<(Array2<usize>, Array2<f64>)> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: n,
        });
    }
    let points = points.as_standard_layout().into_owned();
    let norms: Vec<f64> = points
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let transposed = points.t();

    let mut ids = Array2::<usize>::zeros((n, k));
    let mut dists = Array2::<f64>::zeros((n, k));

    for start in (0..n).step_by(GRAM_BLOCK_ROWS) {
        let end = (start + GRAM_BLOCK_ROWS).min(n);
        let gram = points.slice(s![start..end, ..]).dot(&transposed);
        let block: Vec<Vec<(f64, usize)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let g = gram.row(i - start);
                let approx: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| ((norms[i] + norms[j] - 2.0 * g[j]).max(0.0), j))
                    .collect();
                let mut scratch: Vec<f64> = approx.iter().map(|a| a.0).collect();
                let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
                let threshold = *kth + 1e-8 * (norms[i] + max_norm) + f64::MIN_POSITIVE;
                let row_i = points.row(i);
                let row_i = row_i.as_slice().expect("contiguous");
                let mut exact: Vec<(f64, usize)> = approx
                    .into_iter()
                    .filter(|(a, _)| *a <= threshold)
                    .map(|(_, j)| {
                        let row_j = points.row(j);
                        (
                            squared_distance(row_i, row_j.as_slice().expect("contiguous")),
                            j,
                        )
                    })
                    .collect();
                exact.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                exact.truncate(k);
                exact
            })
            .collect();
        for (offset, neighbors) in block.into_iter().enumerate() {
            let i = start + offset;
            for (m, (sq, j)) in neighbors.into_iter().enumerate() {
                ids[[i, m]] = j;
                dists[[i, m]] = sq.sqrt();
            }
        }
    }
    Ok((ids, dists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn brute_knn(points: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
        let n = points.nrows();
        (0..n)
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let s: f64 = points
                            .row(i)
                            .iter()
                            .zip(points.row(j).iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        (s, j)
                    })
                    .collect();
                d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|x| x.1).collect()
            })
            .collect()
    }

    #[test]
    fn condensed_order_is_row_major_upper_triangle() {
        let pts = array![[0.0], [1.0], [3.0]];
        assert_eq!(condensed_distances(pts.view()), vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn knn_matches_brute_force_with_ties() {
        // Points on a grid produce many exact ties.
        let mut pts = Array2::<f64>::zeros((30, 2));
        for i in 0..30 {
            pts[[i, 0]] = (i % 5) as f64;
            pts[[i, 1]] = (i / 5) as f64;
        }
        let (ids, dists) = knn_table(pts.view(), 6).unwrap();
        let expected = brute_knn(&pts, 6);
        for i in 0..30 {
            assert_eq!(ids.row(i).to_vec(), expected[i], "row {i}");
            assert!(dists.row(i).windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn duplicates_tie_break_by_index() {
        let pts = Array2::<f64>::from_elem((5, 3), 2.5);
        let (ids, dists) = knn_table(pts.view(), 2).unwrap();
        assert_eq!(ids.row(0).to_vec(), vec![1, 2]);
        assert_eq!(ids.row(4).to_vec(), vec![0, 1]);
        assert!(dists.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn too_few_samples() {
        let pts = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            knn_table(pts.view(), 3),
            Err(Error::TooFewSamples { needed: 4, got: 3 })
        ));
    }
}
