use serde::Serialize;

use super::histogram::JointHistogram2D;
use super::shannon::entropy_of_counts;
use crate::error::{Error, Result};

/// Entropies (bits) derived from one joint histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub h_x_given_y: f64,
    pub h_y_given_x: f64,
    /// `H(X) - H(X|Y)`; numerically the mutual information of the two axes.
    pub capacity: f64,
}

/// Channel capacity between the two axes of a joint histogram.
pub fn channel_capacity(joint: &JointHistogram2D) -> Result<CapacityResult> {
    if joint.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let h_x = entropy_of_counts(&joint.marginal_x())?;
    let h_y = entropy_of_counts(&joint.marginal_y())?;
    let h_xy = entropy_of_counts(&joint.counts)?;
    let h_x_given_y = h_xy - h_y;
    let h_y_given_x = h_xy - h_x;
    Ok(CapacityResult {
        h_x,
        h_y,
        h_xy,
        h_x_given_y,
        h_y_given_x,
        capacity: h_x - h_x_given_y,
    })
}
