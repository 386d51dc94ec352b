//! Correlation-matrix PCA with Kaiser-criterion component selection.

use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnMeta, FeatureMatrix, Transform};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_KAISER_THRESHOLD: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    /// `d x d`, columns are unit eigenvectors in eigenvalue-descending order.
    pub loadings: Matrix<T>,
    pub eigenvalues: Vec<T>,
    pub explained_ratio: Vec<T>,
    pub n_selected: usize,
    pub kaiser_threshold: T,
    pub feature_names: Vec<String>,
    pub n_samples: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Sample covariance with divisor `n - 1`.
pub fn covariance<T: Scalar>(data: &Matrix<T>) -> Matrix<T> {
    let (n, d) = data.shape();
    let means = data.column_means();
    let mut cov = Matrix::zeros(d, d);
    for row in data.iter_rows() {
        for a in 0..d {
            let da = row[a] - means[a];
            for b in a..d {
                cov[(a, b)] = cov[(a, b)] + da * (row[b] - means[b]);
            }
        }
    }
    let denom = T::of_usize(n.saturating_sub(1).max(1));
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Fits PCA on standardized numeric data.
pub fn fit_pca<T: Scalar>(
    data: &Matrix<T>,
    feature_names: Vec<String>,
    kaiser_threshold: T,
) -> Result<PcaModel<T>> {
    let (n, d) = data.shape();
    if feature_names.len() != d {
        return Err(Error::Schema(format!(
            "{} feature names for {d} columns",
            feature_names.len()
        )));
    }
    if d < 1 || n < 2 {
        return Err(Error::invalid(format!(
            "PCA needs n >= 2 and d >= 1, got {n}x{d}"
        )));
    }
    data.ensure_finite()?;

    let mut warnings = Vec::new();
    if n < d {
        warnings.push(format!(
            "rank deficient: {n} samples for {d} features, trailing eigenvalues are zero"
        ));
    }

    let eig = symmetric_eigen(&covariance(data))?;
    let eigenvalues: Vec<T> = eig
        .eigenvalues
        .iter()
        .map(|&v| if v < T::zero() { T::zero() } else { v })
        .collect();
    let total: T = eigenvalues.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::invalid("PCA input has zero total variance"));
    }

    let mut loadings = eig.eigenvectors;
    for c in 0..d {
        // largest-magnitude entry positive, first on ties
        let mut best = 0;
        for r in 1..d {
            if loadings[(r, c)].abs() > loadings[(best, c)].abs() {
                best = r;
            }
        }
        if loadings[(best, c)] < T::zero() {
            for r in 0..d {
                loadings[(r, c)] = -loadings[(r, c)];
            }
        }
    }

    let n_selected = eigenvalues
        .iter()
        .filter(|&&v| v >= kaiser_threshold)
        .count()
        .max(1);
    Ok(PcaModel {
        loadings,
        explained_ratio: eigenvalues.iter().map(|&v| v / total).collect(),
        eigenvalues,
        n_selected,
        kaiser_threshold,
        feature_names,
        n_samples: n,
        warnings,
    })
}

impl<T: Scalar> PcaModel<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn cumulative_explained(&self, k: usize) -> T {
        self.explained_ratio.iter().take(k).copied().sum()
    }

    /// `n x k` scores of already standardized data.
    pub fn project(&self, data: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
        if k < 1 || k > self.dim() {
            return Err(Error::invalid(format!(
                "component count {k} outside 1..={}",
                self.dim()
            )));
        }
        if data.cols() != self.dim() {
            return Err(Error::Schema(format!(
                "data has {} columns, model expects {}",
                data.cols(),
                self.dim()
            )));
        }
        let cols: Vec<usize> = (0..k).collect();
        data.matmul(&self.loadings.select_cols(&cols))
    }

    /// Maps `n x k` scores back to the standardized feature space.
    pub fn reconstruct(&self, scores: &Matrix<T>) -> Result<Matrix<T>> {
        let cols: Vec<usize> = (0..scores.cols()).collect();
        scores.matmul(&self.loadings.select_cols(&cols).transpose())
    }

    pub fn loadings_table(&self) -> LoadingsTable<T> {
        let k = self.n_selected;
        LoadingsTable {
            features: self.feature_names.clone(),
            components: component_names(k),
            values: (0..self.dim())
                .map(|r| (0..k).map(|c| self.loadings[(r, c)]).collect())
                .collect(),
        }
    }

    pub fn variance_table(&self) -> Vec<VarianceRow<T>> {
        let mut cum = T::zero();
        self.eigenvalues
            .iter()
            .zip(&self.explained_ratio)
            .enumerate()
            .map(|(i, (&e, &r))| {
                cum = cum + r;
                VarianceRow {
                    component: format!("PC{i}"),
                    eigenvalue: e,
                    explained_ratio: r,
                    cumulative: cum,
                }
            })
            .collect()
    }
}

pub fn component_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("PC{i}")).collect()
}

/// Projects a feature matrix whose columns must match the model features by name.
pub fn project_features(
    fm: &FeatureMatrix,
    model: &PcaModel<f64>,
    k: usize,
) -> Result<FeatureMatrix> {
    let names = fm.column_names();
    if names != model.feature_names {
        let missing: Vec<&String> = model
            .feature_names
            .iter()
            .filter(|n| !names.contains(n))
            .collect();
        let extra: Vec<&String> = names
            .iter()
            .filter(|n| !model.feature_names.contains(n))
            .collect();
        return Err(Error::Schema(format!(
            "column mismatch; missing {missing:?}, unexpected {extra:?}"
        )));
    }
    let scores = model.project(&fm.values, k)?;
    let columns = component_names(k)
        .into_iter()
        .map(|n| ColumnMeta::numeric(n, Transform::None))
        .collect();
    FeatureMatrix::new(scores, columns, fm.row_ids.clone())
}

/// Feature x component loading values (rows = variables).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadingsTable<T> {
    pub features: Vec<String>,
    pub components: Vec<String>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> LoadingsTable<T> {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend(self.components.iter().cloned());
        out.write_record(&header)?;
        for (f, row) in self.features.iter().zip(&self.values) {
            let mut rec = vec![f.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow<T> {
    pub component: String,
    pub eigenvalue: T,
    pub explained_ratio: T,
    pub cumulative: T,
}
