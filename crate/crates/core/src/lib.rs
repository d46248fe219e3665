//! Clustering of co-moving time series.
//!
//! Windowed similarities feed either spectral clustering or a pairwise
//! exponential model whose MAP is taken over valid partitions (exactly, by
//! sampling, or along an HMM over clusterings).

pub mod error;
pub mod exp_model;
pub mod experiments;
pub mod format;
pub mod hardness;
pub mod hmm;
pub mod linalg;
pub mod mcmc;
pub mod panel;
pub mod partition;
pub mod similarity;
pub mod spectral;
pub mod triangular;

pub use error::{Error, Result};
pub use panel::SeriesPanel;
pub use partition::{ClusterTimeline, EdgeEnsemble, Partition};
pub use similarity::{SimilarityConfig, SimilarityMatrix};
