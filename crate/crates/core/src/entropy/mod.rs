//! Entropy and channel-capacity primitives. All results are in bits.

pub mod affinity;
pub mod capacity;
pub mod distance;
pub mod histogram;
pub mod shannon;
pub mod sigma;

pub use affinity::{
    inter_sample_entropy, knn_affinities, symmetrize_normalize, ConditionalAffinity,
    PairwiseAffinity, SmoothKnnParams, DEFAULT_K,
};
pub use capacity::{channel_capacity, CapacityResult};
pub use histogram::{
    intra_sample_entropy, joint_distance_histogram, BinRange, Histogram1D, JointHistogram2D,
    DEFAULT_BINS,
};
pub use shannon::{information_content, shannon_entropy, DiscreteDistribution};
pub use sigma::{solve_sigma, SigmaSolution};
