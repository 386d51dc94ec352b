//! k-means (Lloyd, k-means++ seeding), k-medoids (PAM, CLARA) and elbow
//! selection.

mod elbow;
mod kmeans;
mod medoids;

pub use elbow::{elbow_sweep, kneedle, ElbowCurve, KneeResult, SweepParams, DEFAULT_SENSITIVITY};
pub use kmeans::{kmeans, kmeans_best_of, kmeans_pp_init, KMeansParams};
pub use medoids::{clara, pam, ClaraParams, DEFAULT_CLARA_SAMPLES, DEFAULT_MAX_SWAPS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{distance, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    KmedoidsClara,
    KmedoidsPam,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::KmedoidsClara => "kmedoids_clara",
            Algorithm::KmedoidsPam => "kmedoids_pam",
        }
    }

    pub fn is_medoid(self) -> bool {
        !matches!(self, Algorithm::Kmeans)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            "kmedoids" | "kmedoids_clara" | "clara" => Ok(Algorithm::KmedoidsClara),
            "kmedoids_pam" | "pam" => Ok(Algorithm::KmedoidsPam),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// A fitted clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel<T> {
    pub algorithm: Algorithm,
    pub k: usize,
    pub labels: Vec<usize>,
    /// Centroids for k-means, medoid coordinates for k-medoids.
    pub centers: Matrix<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medoid_row_indices: Option<Vec<usize>>,
    /// Squared distances (k-means) or distances (k-medoids) to the assigned center.
    pub inertia: T,
    pub n_iter: usize,
    pub seed: u64,
    /// Assignment cost observed at each Lloyd iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inertia_trace: Vec<T>,
}

impl<T: Scalar> ClusterModel<T> {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Checks label range, non-empty clusters, cost sign and medoid validity.
    pub fn check_invariants(&self, n_points: usize) -> Result<()> {
        if self.labels.len() != n_points {
            return Err(Error::LengthMismatch {
                left: self.labels.len(),
                right: n_points,
            });
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.k) {
            return Err(Error::invalid(format!("label {bad} outside 0..{}", self.k)));
        }
        if let Some(empty) = self.cluster_sizes().iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(empty));
        }
        if self.inertia.is_nan() || self.inertia < T::zero() {
            return Err(Error::invalid("negative or NaN inertia"));
        }
        if let Some(m) = &self.medoid_row_indices {
            let mut sorted = m.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.k || sorted.iter().any(|&r| r >= n_points) {
                return Err(Error::invalid("medoid rows must be distinct valid rows"));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_points<T: Scalar>(points: &Matrix<T>, k: usize) -> Result<()> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    points.ensure_finite()
}

/// Index of the nearest center by Euclidean distance; ties go to the lowest index.
pub(crate) fn nearest<T: Scalar>(point: &[T], centers: &Matrix<T>) -> (usize, T) {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, row) in centers.iter_rows().enumerate() {
        let d = distance(point, row);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Relabels clusters by order of first appearance.
pub fn canonicalize_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels() {
        assert_eq!(canonicalize_labels(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn algorithm_names_parse() {
        assert_eq!("kmeans".parse::<Algorithm>().unwrap(), Algorithm::Kmeans);
        assert_eq!(
            "kmedoids".parse::<Algorithm>().unwrap(),
            Algorithm::KmedoidsClara
        );
        assert!("dbscan".parse::<Algorithm>().is_err());
    }

    #[test]
    fn nearest_ties_go_low() {
        let c = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        assert_eq!(nearest(&[1.0], &c).0, 0);
    }
}
