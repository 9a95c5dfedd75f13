//! Layer- and channel-level analyses: capacity matrices between layers,
//! per-layer inter-sample entropy, per-channel intra-sample entropy series
//! and the two-level circle-packing aggregate.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::distance::condensed_distances;
use crate::entropy::{
    channel_capacity, inter_sample_entropy, intra_sample_entropy, BinRange, JointHistogram2D,
};
use crate::error::{Error, Result};
use crate::store::{ActivationBlock, Pick, Run, SampleSelector, SliceSpec};

/// Number of capacity-matrix histogram sets kept per run.
const HISTOGRAM_CACHE_ENTRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityMatrix {
    pub layer_i: usize,
    pub layer_j: usize,
    pub epoch: u32,
    /// `values[a][b]`: capacity between channel `a` of `layer_i` and channel
    /// `b` of `layer_j`, in bits.
    pub values: Vec<Vec<f64>>,
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
}

impl CapacityMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> f64 {
        let n = self.rows() * self.cols();
        self.values.iter().flatten().sum::<f64>() / n as f64
    }

    pub fn transpose(&self) -> CapacityMatrix {
        let values = (0..self.cols())
            .map(|b| self.values.iter().map(|row| row[b]).collect())
            .collect();
        CapacityMatrix {
            layer_i: self.layer_j,
            layer_j: self.layer_i,
            epoch: self.epoch,
            values,
            row_order: self.col_order.clone(),
            col_order: self.row_order.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortAxis {
    Rows,
    Cols,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortStat {
    Max,
    Mean,
}

/// Textual sort request `<rows|cols|both>:<max|mean>`, e.g. `cols:max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SortOrder {
    pub axis: SortAxis,
    pub stat: SortStat,
}

impl FromStr for SortOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("sort must be <rows|cols|both>:<max|mean>, got {s:?}"));
        let (axis, stat) = s.trim().split_once(':').ok_or_else(bad)?;
        let axis = match axis {
            "rows" => SortAxis::Rows,
            "cols" => SortAxis::Cols,
            "both" => SortAxis::Both,
            _ => return Err(bad()),
        };
        let stat = match stat {
            "max" => SortStat::Max,
            "mean" => SortStat::Mean,
            _ => return Err(bad()),
        };
        Ok(SortOrder { axis, stat })
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = match self.axis {
            SortAxis::Rows => "rows",
            SortAxis::Cols => "cols",
            SortAxis::Both => "both",
        };
        let stat = match self.stat {
            SortStat::Max => "max",
            SortStat::Mean => "mean",
        };
        write!(f, "{axis}:{stat}")
    }
}

fn stat_of(values: impl Iterator<Item = f64>, stat: SortStat) -> f64 {
    match stat {
        SortStat::Max => values.fold(f64::NEG_INFINITY, f64::max),
        SortStat::Mean => {
            let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            sum / n as f64
        }
    }
}

fn ascending_order(stats: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[a].total_cmp(&stats[b]).then(a.cmp(&b)));
    order
}

/// Orders rows and/or columns ascending by their max or mean value. Ties keep
/// the original index order. `values` are never touched.
pub fn sort_matrix(m: &CapacityMatrix, axis: SortAxis, stat: SortStat) -> CapacityMatrix {
    let mut out = m.clone();
    if matches!(axis, SortAxis::Cols | SortAxis::Both) {
        let stats: Vec<f64> = (0..m.cols())
            .map(|b| stat_of(m.values.iter().map(|row| row[b]), stat))
            .collect();
        out.col_order = ascending_order(&stats);
    }
    if matches!(axis, SortAxis::Rows | SortAxis::Both) {
        let stats: Vec<f64> = m
            .values
            .iter()
            .map(|row| stat_of(row.iter().copied(), stat))
            .collect();
        out.row_order = ascending_order(&stats);
    }
    out
}

/// Joint histograms behind recently computed capacity matrices, most recent
/// last.
#[derive(Debug, Default)]
pub struct HistogramCache {
    entries: Mutex<VecDeque<(String, Arc<Vec<JointHistogram2D>>)>>,
}

impl HistogramCache {
    fn get(&self, key: &str) -> Option<Arc<Vec<JointHistogram2D>>> {
        let entries = self.entries.lock().expect("histogram cache poisoned");
        entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    fn put(&self, key: String, value: Arc<Vec<JointHistogram2D>>) {
        let mut entries = self.entries.lock().expect("histogram cache poisoned");
        entries.retain(|(k, _)| *k != key);
        entries.push_back((key, value));
        while entries.len() > HISTOGRAM_CACHE_ENTRIES {
            entries.pop_front();
        }
    }
}

/// Per-channel pairwise-distance bin indices for one block.
struct BinnedDistances {
    ranges: Vec<BinRange>,
    indices: Vec<Vec<u16>>,
}

fn bin_channel_distances(block: &ActivationBlock, bins: usize) -> Result<BinnedDistances> {
    if bins == 0 || bins > usize::from(u16::MAX) {
        return Err(Error::InvalidArgument(format!("bin count {bins} out of range")));
    }
    let per_channel: Vec<Result<(BinRange, Vec<u16>)>> = (0..block.n_channels())
        .map(|c| {
            let d = condensed_distances(block.channel_matrix(c).view());
            let range = BinRange::spanning(&d, bins)?;
            let idx = d.iter().map(|&v| range.index(v) as u16).collect();
            Ok((range, idx))
        })
        .collect();
    let mut ranges = Vec::with_capacity(per_channel.len());
    let mut indices = Vec::with_capacity(per_channel.len());
    for item in per_channel {
        let (r, i) = item?;
        ranges.push(r);
        indices.push(i);
    }
    Ok(BinnedDistances { ranges, indices })
}

/// Joint distance histograms for every channel pair of two layers, in
/// row-major `(a, b)` order.
pub fn capacity_histograms(
    run: &Run,
    epoch: u32,
    layer_i: usize,
    layer_j: usize,
    selector: &SampleSelector,
    bins: usize,
) -> Result<Arc<Vec<JointHistogram2D>>> {
    run.dumped_layer(layer_i)?;
    run.dumped_layer(layer_j)?;
    run.check_epoch(epoch)?;
    let key = format!("{epoch}|{layer_i}|{layer_j}|{selector}|{bins}");
    if let Some(hit) = run.histogram_cache().get(&key) {
        return Ok(hit);
    }

    let block_i = run.block(layer_i, epoch, selector, Pick::All)?;
    let n = block_i.n_samples();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let binned_i = bin_channel_distances(&block_i, bins)?;
    drop(block_i);
    let binned_j = if layer_j == layer_i {
        None
    } else {
        let block_j = run.block(layer_j, epoch, selector, Pick::All)?;
        Some(bin_channel_distances(&block_j, bins)?)
    };
    let binned_j = binned_j.as_ref().unwrap_or(&binned_i);

    let ci = binned_i.indices.len();
    let cj = binned_j.indices.len();
    let hists: Vec<JointHistogram2D> = (0..ci * cj)
        .into_par_iter()
        .map(|cell| {
            let (a, b) = (cell / cj, cell % cj);
            JointHistogram2D::from_bin_indices(
                &binned_i.indices[a],
                &binned_j.indices[b],
                binned_i.ranges[a],
                binned_j.ranges[b],
            )
        })
        .collect();
    let hists = Arc::new(hists);
    run.histogram_cache().put(key, hists.clone());
    Ok(hists)
}

/// Channel-capacity matrix between every channel of `layer_i` and every
/// channel of `layer_j` at one epoch, over the selected samples.
pub fn capacity_matrix(
    run: &Run,
    epoch: u32,
    layer_i: usize,
    layer_j: usize,
    selector: &SampleSelector,
    bins: usize,
) -> Result<CapacityMatrix> {
    let hists = capacity_histograms(run, epoch, layer_i, layer_j, selector, bins)?;
    let ci = run.layer(layer_i)?.channels;
    let cj = run.layer(layer_j)?.channels;
    let same = layer_i == layer_j;
    // Within one layer only the upper triangle is computed; mirroring keeps
    // the matrix exactly symmetric.
    let flat: Vec<f64> = hists
        .par_iter()
        .enumerate()
        .map(|(cell, h)| {
            if same && cell / cj > cell % cj {
                Ok(f64::NAN)
            } else {
                channel_capacity(h).map(|r| r.capacity)
            }
        })
        .collect::<Result<_>>()?;
    let mut values: Vec<Vec<f64>> = flat.chunks_exact(cj).map(<[f64]>::to_vec).collect();
    if same {
        for a in 1..ci {
            let (upper, lower) = values.split_at_mut(a);
            for (b, row) in upper.iter().enumerate() {
                lower[0][b] = row[a];
            }
        }
    }
    Ok(CapacityMatrix {
        layer_i,
        layer_j,
        epoch,
        values,
        row_order: (0..ci).collect(),
        col_order: (0..cj).collect(),
    })
}

/// Inter-sample entropy of a layer's flattened per-sample outputs.
pub fn layer_inter_entropy(
    run: &Run,
    epoch: u32,
    layer: usize,
    selector: &SampleSelector,
    k: usize,
) -> Result<f64> {
    let block = run.block(layer, epoch, selector, Pick::All)?;
    inter_sample_entropy(block.flattened().view(), k)
}

/// `[N, C]` table of intra-sample entropies, one per sample and channel.
pub fn intra_entropy_table(block: &ActivationBlock, bins: usize) -> Result<Array2<f64>> {
    let n = block.n_samples();
    let c = block.n_channels();
    let flat: Vec<f64> = (0..n * c)
        .into_par_iter()
        .map(|cell| intra_sample_entropy(block.map(cell / c, cell % c), bins))
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((n, c), flat).expect("n * c entries"))
}

/// Mean intra-sample entropy of one channel over the selected samples.
pub fn channel_intra_entropy(
    run: &Run,
    epoch: u32,
    layer: usize,
    channel: usize,
    selector: &SampleSelector,
    bins: usize,
) -> Result<f64> {
    let block = run.block(layer, epoch, selector, Pick::One(channel))?;
    let table = intra_entropy_table(&block, bins)?;
    Ok(table.column(0).sum() / table.nrows() as f64)
}

/// Which entropy a slice query computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Inter-sample entropy of each block's flattened samples.
    Inter,
    /// Mean intra-sample entropy of each channel.
    Intra,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inter" => Ok(Metric::Inter),
            "intra" => Ok(Metric::Intra),
            other => Err(Error::InvalidArgument(format!("metric must be inter or intra, got {other:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Inter => "inter",
            Metric::Intra => "intra",
        })
    }
}

/// One value of a slice query. `channel` is `None` for an inter-sample
/// entropy taken over all channels of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub layer: usize,
    pub epoch: u32,
    pub channel: Option<usize>,
    pub bits: f64,
}

/// Evaluates `metric` on every block of a slice, in slice order. Intra
/// entropies yield one value per channel of each block.
pub fn slice_entropy(run: &Run, spec: &SliceSpec, metric: Metric, k: usize, bins: usize) -> Result<Vec<EntropyValue>> {
    let mut out = Vec::new();
    for block in run.slice(spec)? {
        let block = block?;
        let (layer, epoch) = (block.layer.index, block.epoch);
        match metric {
            Metric::Inter => out.push(EntropyValue {
                layer,
                epoch,
                channel: block.channel,
                bits: inter_sample_entropy(block.flattened().view(), k)?,
            }),
            Metric::Intra => {
                let table = intra_entropy_table(&block, bins)?;
                let n = table.nrows() as f64;
                for (col, values) in table.columns().into_iter().enumerate() {
                    out.push(EntropyValue {
                        layer,
                        epoch,
                        channel: Some(block.channel.unwrap_or(col)),
                        bits: values.sum() / n,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel mean intra-sample entropy for each class (and all samples)
/// at every dumped epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntropySeries {
    pub layer: usize,
    pub epochs: Vec<u32>,
    /// Class labels `"0"`, `"1"`, ... followed by `"all"`.
    pub classes: Vec<String>,
    /// `values[channel][class][epoch]` in bits, indexed like `classes` and
    /// `epochs`.
    pub values: Vec<Vec<Vec<f64>>>,
}

pub const ALL_CLASSES: &str = "all";

/// Class-by-channel means of an intra-entropy table. The last row is the
/// mean over every sample.
fn class_means(run: &Run, table: &Array2<f64>) -> Result<Vec<Vec<f64>>> {
    let classes = run.manifest().num_classes;
    let channels = table.ncols();
    let mut sums = vec![vec![0.0; channels]; classes + 1];
    let mut counts = vec![0usize; classes + 1];
    for (row, label) in run.samples().labels().enumerate() {
        for (c, v) in table.row(row).iter().enumerate() {
            sums[label][c] += v;
            sums[classes][c] += v;
        }
        counts[label] += 1;
        counts[classes] += 1;
    }
    // A class without probe samples has no mean to report.
    if counts.contains(&0) {
        return Err(Error::EmptySelection);
    }
    for (row, &n) in sums.iter_mut().zip(&counts) {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

pub fn channel_entropy_series(run: &Run, layer: usize, bins: usize) -> Result<ChannelEntropySeries> {
    let desc = run.dumped_layer(layer)?;
    let classes = run.manifest().num_classes;
    let epochs = run.manifest().epochs.clone();
    let mut values = vec![vec![vec![0.0; epochs.len()]; classes + 1]; desc.channels];
    for (e, &epoch) in epochs.iter().enumerate() {
        let block = run.block(layer, epoch, &SampleSelector::All, Pick::All)?;
        let means = class_means(run, &intra_entropy_table(&block, bins)?)?;
        for (class, row) in means.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                values[c][class][e] = v;
            }
        }
    }
    let mut names: Vec<String> = (0..classes).map(|c| c.to_string()).collect();
    names.push(ALL_CLASSES.to_string());
    Ok(ChannelEntropySeries {
        layer,
        epochs,
        classes: names,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNode {
    pub channel: usize,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNode {
    pub class: usize,
    /// Sum of the children's sizes.
    pub size: f64,
    pub children: Vec<ChannelNode>,
}

/// Two-level hierarchy: classes, then each class's channels sized by their
/// mean intra-sample entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirclePackTree {
    pub layer: usize,
    pub epoch: u32,
    pub children: Vec<ClassNode>,
}

pub fn circle_pack(run: &Run, layer: usize, epoch: u32, bins: usize) -> Result<CirclePackTree> {
    run.dumped_layer(layer)?;
    let block = run.block(layer, epoch, &SampleSelector::All, Pick::All)?;
    let means = class_means(run, &intra_entropy_table(&block, bins)?)?;
    let children = means
        .iter()
        .take(run.manifest().num_classes)
        .enumerate()
        .map(|(class, row)| {
            let children: Vec<ChannelNode> = row
                .iter()
                .enumerate()
                .map(|(channel, &size)| ChannelNode { channel, size })
                .collect();
            ClassNode {
                class,
                size: children.iter().map(|c| c.size).sum(),
                children,
            }
        })
        .collect();
    Ok(CirclePackTree {
        layer,
        epoch,
        children,
    })
}
