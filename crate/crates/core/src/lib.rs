//! Topology- and adjacency-aware segmentation losses with analytic
//! gradients, topological evaluation metrics, and synthetic vascular
//! phantoms for multiclass Circle of Willis segmentation.

pub mod analysis;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod scheme;
pub mod topology;
pub mod volume;

pub use error::{Error, Result};
pub use scheme::{AdjacencyMatrix, ClassScheme, SizeGroup};
pub use volume::{one_hot, BinaryVolume, Field3, LabelVolume, ProbVolume, Shape3, VoxelSpacing};
