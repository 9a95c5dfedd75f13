//! Input/output analyses: confusion matrices, the two conditional-entropy
//! families over epochs, loss curves and the input-diversity experiment.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::entropy::inter_sample_entropy;
use crate::entropy::shannon::entropy_of_counts;
use crate::error::{Error, Result};
use crate::flow::layer_inter_entropy;
use crate::store::{LossRow, Run, SampleSelector};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub epoch: u32,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(epoch: u32, num_classes: usize, labels: &[usize], predictions: &[usize]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::SampleMisalignment(format!(
                "{} labels vs {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut counts = vec![vec![0u64; num_classes]; num_classes];
        for (&actual, &pred) in labels.iter().zip(predictions) {
            if actual >= num_classes || pred >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "class index out of range for {num_classes} classes"
                )));
            }
            counts[actual][pred] += 1;
        }
        Ok(ConfusionMatrix { epoch, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row(&self, actual: usize) -> Vec<u64> {
        self.counts[actual].clone()
    }

    pub fn column(&self, predicted: usize) -> Vec<u64> {
        self.counts.iter().map(|r| r[predicted]).collect()
    }
}

/// Argmax of every row; ties go to the lowest class index.
pub fn predictions(outputs: ArrayView2<'_, f32>) -> Vec<usize> {
    outputs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn confusion(run: &Run, epoch: u32) -> Result<ConfusionMatrix> {
    let outputs = run.outputs(epoch)?;
    let labels: Vec<usize> = run.samples().labels().collect();
    ConfusionMatrix::from_predictions(epoch, run.manifest().num_classes, &labels, &predictions(outputs.view()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `H(x.label | y = i)`: uncertainty about the ground truth given the
    /// prediction, one value per predicted class.
    LabelGivenPred,
    /// `H(y | x.label = i)`: spread of the predictions for one true class.
    PredGivenLabel,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label_given_pred" => Ok(Direction::LabelGivenPred),
            "pred_given_label" => Ok(Direction::PredGivenLabel),
            other => Err(Error::InvalidArgument(format!(
                "direction must be label_given_pred or pred_given_label, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LabelGivenPred => "label_given_pred",
            Direction::PredGivenLabel => "pred_given_label",
        })
    }
}

/// Per-class conditional entropy for one confusion matrix. `None` marks an
/// undefined value: a class that no sample was predicted as
/// (`LabelGivenPred`) or that has no samples (`PredGivenLabel`).
pub fn conditional_entropies(m: &ConfusionMatrix, direction: Direction) -> Vec<Option<f64>> {
    (0..m.num_classes())
        .map(|i| {
            let counts = match direction {
                Direction::LabelGivenPred => m.column(i),
                Direction::PredGivenLabel => m.row(i),
            };
            // Only fails on an all-zero vector.
            entropy_of_counts(&counts).ok()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEntropySeries {
    pub direction: Direction,
    pub epochs: Vec<u32>,
    /// `values[class][epoch]` in bits; `null` where undefined.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ConditionalEntropySeries {
    pub fn from_matrices(direction: Direction, matrices: &[ConfusionMatrix]) -> Self {
        let classes = matrices.first().map_or(0, ConfusionMatrix::num_classes);
        let mut values = vec![Vec::with_capacity(matrices.len()); classes];
        for m in matrices {
            for (class, v) in conditional_entropies(m, direction).into_iter().enumerate() {
                values[class].push(v);
            }
        }
        ConditionalEntropySeries {
            direction,
            epochs: matrices.iter().map(|m| m.epoch).collect(),
            values,
        }
    }
}

/// Confusion matrices for every dumped epoch, ascending.
pub fn confusion_series(run: &Run) -> Result<Vec<ConfusionMatrix>> {
    run.manifest().epochs.iter().map(|&t| confusion(run, t)).collect()
}

pub fn conditional_entropy_series(run: &Run, direction: Direction) -> Result<ConditionalEntropySeries> {
    Ok(ConditionalEntropySeries::from_matrices(direction, &confusion_series(run)?))
}

pub fn loss_curve(run: &Run) -> Vec<LossRow> {
    run.loss().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityPoint {
    /// Samples per class.
    pub size: usize,
    pub bits: f64,
}

/// Inter-sample entropy of several raw-input point sets, each tagged with its
/// per-class size. Output is ordered by size (stable for equal sizes).
pub fn input_diversity_experiment(datasets: &[(usize, ArrayView2<'_, f64>)], k: usize) -> Result<Vec<DiversityPoint>> {
    let mut out = datasets
        .iter()
        .map(|(size, points)| {
            Ok(DiversityPoint {
                size: *size,
                bits: inter_sample_entropy(*points, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|p| p.size);
    Ok(out)
}

/// The same experiment over dumped runs: layer 0 at epoch 0 of each run,
/// sized by its probe count per class.
pub fn input_diversity_of_runs(runs: &[&Run], k: usize) -> Result<Vec<DiversityPoint>> {
    let mut out = runs
        .iter()
        .map(|run| {
            Ok(DiversityPoint {
                size: run.manifest().probe_count / run.manifest().num_classes,
                bits: layer_inter_entropy(run, 0, 0, &SampleSelector::All, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|p| p.size);
    Ok(out)
}
