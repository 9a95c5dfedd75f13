//! On-disk run store: manifest and sample table, tensor files, slicing.

pub mod manifest;
pub mod run;
pub mod slice;

pub use manifest::{load_loss_csv, LayerDescriptor, LayerKind, LossRow, RunManifest, SampleRow, SampleTable, Split};
pub use run::{ActivationBlock, Catalog, IndexEntry, Run, RunIndex, SliceIter, INDEX_FILE};
pub use slice::{Pick, SampleSelector, SliceSpec};
