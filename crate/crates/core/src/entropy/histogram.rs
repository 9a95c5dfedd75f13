//! Equal-width histograms: the 1-D value histogram behind intra-sample
//! entropy and the 2-D joint histogram of paired sample distances behind
//! channel capacity.

use ndarray::ArrayView2;
use serde::Serialize;

use super::distance::condensed_distances;
use super::shannon::entropy_of_counts;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 32;

/// `bins` equal-width intervals over `[lo, hi]`, the upper edge inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinRange {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinRange {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bin count must be positive".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::InvalidArgument(format!("bad bin range [{lo}, {hi}]")));
        }
        Ok(BinRange { lo, hi, bins })
    }

    /// Range spanning the observed minimum and maximum of `values`.
    pub fn spanning(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!("histogram input value {v}")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        BinRange::new(lo, hi, bins)
    }

    /// Bin of `x`; a zero-width range puts everything in bin 0.
    #[inline]
    pub fn index(&self, x: f64) -> usize {
        let width = self.hi - self.lo;
        if width <= 0.0 {
            return 0;
        }
        let t = ((x - self.lo) / width * self.bins as f64).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        let width = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins)
            .map(|i| {
                if i == self.bins {
                    self.hi
                } else {
                    self.lo + width * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram1D {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram1D {
    pub fn with_range(values: &[f64], range: BinRange) -> Self {
        let mut counts = vec![0u64; range.bins];
        for &v in values {
            counts[range.index(v)] += 1;
        }
        Histogram1D {
            bins: range.bins,
            lo: range.lo,
            hi: range.hi,
            counts,
        }
    }

    /// Histogram over the observed `[min, max]` of `values`.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        let range = BinRange::spanning(values, bins)?;
        Ok(Histogram1D::with_range(values, range))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn entropy(&self) -> Result<f64> {
        entropy_of_counts(&self.counts)
    }
}

/// Intra-sample entropy of one sample (image or feature map), in bits.
///
/// Values are min-max normalized onto `(-1, 1)` and dropped into `bins`
/// equal-width bins; the entropy of the normalized bin frequencies is
/// returned. Normalizing first makes the result invariant to any positive
/// affine rescaling of the input, and a constant sample lands in one bin.
pub fn intra_sample_entropy(values: &[f32], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(format!("sample value {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Binning the unit-interval position t = (x - min) / (max - min) into
    // `bins` equal slots is the same partition as equal bins over (-1, 1)
    // applied to 2t - 1.
    let range = BinRange::new(lo as f64, hi as f64, bins)?;
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[range.index(v as f64)] += 1;
    }
    entropy_of_counts(&counts)
}

/// Joint frequency table of paired distances, `counts[x * bins + y]`.
///
/// Axis `x` bins the distances of the first channel, axis `y` those of the
/// second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointHistogram2D {
    pub bins: usize,
    pub edges_x: Vec<f64>,
    pub edges_y: Vec<f64>,
    pub counts: Vec<u64>,
}

impl JointHistogram2D {
    pub fn from_pairs(xs: &[f64], ys: &[f64], bins: usize) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::SampleMisalignment(format!(
                "{} x-values vs {} y-values",
                xs.len(),
                ys.len()
            )));
        }
        let range_x = BinRange::spanning(xs, bins)?;
        let range_y = BinRange::spanning(ys, bins)?;
        Ok(JointHistogram2D::with_ranges(xs, ys, range_x, range_y))
    }

    pub fn with_ranges(xs: &[f64], ys: &[f64], range_x: BinRange, range_y: BinRange) -> Self {
        let bins_x: Vec<usize> = xs.iter().map(|&x| range_x.index(x)).collect();
        let bins_y: Vec<usize> = ys.iter().map(|&y| range_y.index(y)).collect();
        JointHistogram2D::from_bin_indices(&bins_x, &bins_y, range_x, range_y)
    }

    pub(crate) fn from_bin_indices<T: Copy + Into<usize>>(
        bins_x: &[T],
        bins_y: &[T],
        range_x: BinRange,
        range_y: BinRange,
    ) -> Self {
        assert_eq!(range_x.bins, range_y.bins, "joint histogram axes differ");
        let bins = range_x.bins;
        let mut counts = vec![0u64; bins * bins];
        for (&bx, &by) in bins_x.iter().zip(bins_y) {
            counts[bx.into() * bins + by.into()] += 1;
        }
        JointHistogram2D {
            bins,
            edges_x: range_x.edges(),
            edges_y: range_y.edges(),
            counts,
        }
    }

    /// Builds a histogram directly from a count table (for tests and tools).
    pub fn from_counts(bins: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != bins * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for a {bins}x{bins} table",
                counts.len()
            )));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64).collect();
        Ok(JointHistogram2D {
            bins,
            edges_x: edges.clone(),
            edges_y: edges,
            counts,
        })
    }

    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[x * self.bins + y]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts per x-bin (summing over y).
    pub fn marginal_x(&self) -> Vec<u64> {
        self.counts
            .chunks_exact(self.bins)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Counts per y-bin (summing over x).
    pub fn marginal_y(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.bins];
        for row in self.counts.chunks_exact(self.bins) {
            for (acc, c) in out.iter_mut().zip(row) {
                *acc += c;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let b = self.bins;
        let mut counts = vec![0u64; b * b];
        for x in 0..b {
            for y in 0..b {
                counts[y * b + x] = self.counts[x * b + y];
            }
        }
        JointHistogram2D {
            bins: b,
            edges_x: self.edges_y.clone(),
            edges_y: self.edges_x.clone(),
            counts,
        }
    }
}

fn check_maps(maps_a: &ArrayView2<'_, f64>, maps_b: &ArrayView2<'_, f64>) -> Result<usize> {
    if maps_a.nrows() != maps_b.nrows() {
        return Err(Error::SampleMisalignment(format!(
            "{} samples vs {} samples",
            maps_a.nrows(),
            maps_b.nrows()
        )));
    }
    let n = maps_a.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    Ok(n)
}

/// Joint histogram of `(|a_p - a_q|, |b_p - b_q|)` over all sample pairs
/// `p < q`. Row `p` of both inputs must come from the same input sample.
pub fn joint_distance_histogram(
    maps_a: ArrayView2<'_, f64>,
    maps_b: ArrayView2<'_, f64>,
    bins: usize,
) -> Result<JointHistogram2D> {
    check_maps(&maps_a, &maps_b)?;
    let da = condensed_distances(maps_a);
    let db = condensed_distances(maps_b);
    JointHistogram2D::from_pairs(&da, &db, bins)
}
