use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Information content `-log2(p)` of an event with probability `p`, in bits.
pub fn information_content(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::DomainError(p));
    }
    Ok(-p.log2())
}

/// A probability vector whose entries are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    p: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "probability {bad} is negative or non-finite"
            )));
        }
        let mass: f64 = p.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(DiscreteDistribution { p })
    }

    /// Normalizes a table of counts. Fails on an all-zero table.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyHistogram);
        }
        let total = total as f64;
        Ok(DiscreteDistribution {
            p: counts.iter().map(|&c| c as f64 / total).collect(),
        })
    }

    /// Normalizes non-negative weights by their sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::EmptyHistogram);
        }
        DiscreteDistribution::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        DiscreteDistribution {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn shannon_entropy(d: &DiscreteDistribution) -> f64 {
    entropy_bits(d.p.iter().copied())
}

/// `-sum p log2 p` over an iterator of probabilities, summed in iteration
/// order. Zero entries are skipped.
pub(crate) fn entropy_bits(p: impl Iterator<Item = f64>) -> f64 {
    let h: f64 = p.filter(|&v| v > 0.0).map(|v| -v * v.log2()).sum();
    h.max(0.0)
}

/// Entropy of a count table, normalizing on the fly.
pub(crate) fn entropy_of_counts(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let total = total as f64;
    Ok(entropy_bits(counts.iter().map(|&c| c as f64 / total)))
}
