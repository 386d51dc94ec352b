//! Property classification for short-term rental listings.
//!
//! The crate covers the full pipeline: record ingestion and area-level
//! enrichment, skew-aware preprocessing, correlation-matrix PCA, k-means and
//! k-medoids (PAM / CLARA) clustering with kneedle elbow selection, internal
//! validity indices, cross-tabulation and cluster profiling.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the pipeline uses.

pub mod cluster;
pub mod data_model;
pub mod error;
pub mod ingestion;
pub mod linalg;
pub mod matrix;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod profile;
pub mod scalar;
pub mod validate;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub use cluster::{Algorithm, ClusterModel, ElbowCurve};
pub use data_model::{ColumnKind, ColumnMeta, FeatureMatrix, PropertyRecord, Transform};
pub use pca::PcaModel;

/// Dense `f64` matrix.
pub type Matrix64 = Matrix<f64>;
/// Single-precision matrix.
pub type Matrix32 = Matrix<f32>;
/// PCA model over `f64`.
pub type PcaModel64 = PcaModel<f64>;
/// Cluster model over `f64`.
pub type ClusterModel64 = ClusterModel<f64>;
/// Cluster model over `f32`.
pub type ClusterModel32 = ClusterModel<f32>;
/// Elbow curve over `f64`.
pub type ElbowCurve64 = ElbowCurve<f64>;
