//! Similarity graph over the Q1 tensor, eigengap estimation of the cluster
//! count and normalized spectral clustering.

pub mod eigen;
mod graph;
mod kmeans;
mod spectral;

pub use graph::{build_graph, kernel, CsrMatrix, GraphConfig, SimilarityGraph, Weights};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use spectral::{
    eigengap_k, estimate_k, kmeans_cluster, laplacian_spectrum, spectral_cluster, ClusterMap, EigengapReport,
    Provenance, EIGENGAP_COUNT, MAX_CLUSTERS,
};
