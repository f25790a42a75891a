//! Customer segmentation over availability-partitioned tabular data.
//!
//! The corpus is split into disjoint regions by which of a few split
//! variables are present. Each region is normalized independently, its
//! number of clusters is seeded by DBSCAN and refined by a local
//! Davies-Bouldin search, and a genetic algorithm tunes the per-variable
//! weights of the Euclidean distance used by k-means.

// `!(x >= 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod dataset;
pub mod eda;
pub mod error;
pub mod exec;
pub mod gaopt;
pub mod partition;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod synthgen;

pub use cluster::{FeatureMatrix, WeightVector};
pub use dataset::{Column, ColumnKind, ColumnSpec, ColumnTable, TableSchema};
pub use error::{Error, Result};

/// Version tag written into every JSON document as `spec_version`.
pub const FORMAT_VERSION: &str = "1.0";
