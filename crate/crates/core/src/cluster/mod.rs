//! Weighted-Euclidean clustering: k-means, DBSCAN, validity scores and
//! selection of the number of clusters.

mod dbscan;
mod kmeans;
mod matrix;
mod metric;
mod select;
mod validity;

pub use dbscan::{dbscan_fit, knee_eps, DbscanConfig, DbscanResult, NOISE};
pub use kmeans::{kmeans_fit, kmeans_single, ClusteringModel, KMeansConfig, LloydRun};
pub use matrix::FeatureMatrix;
pub use metric::{weighted_distance, weighted_sq_distance, WeightVector, SIMPLEX_TOL};
pub use select::{candidate_ks, select_k, KSearch, KSelection};
pub use validity::{davies_bouldin, inertia};
