//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub eigenvalues: Vec<T>,
    /// Columns are unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: Matrix<T>,
    pub sweeps: usize,
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Diagonalises a symmetric matrix.
///
/// Sweeps over all upper-triangle pairs until the off-diagonal Frobenius norm
/// drops below `1e-11 * d` (scaled by the matrix norm when it exceeds one, and
/// floored at a few ulps for `f32`).
pub fn symmetric_eigen<T: Scalar>(matrix: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let n = matrix.rows();
    if n != matrix.cols() {
        return Err(Error::invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            matrix.cols()
        )));
    }
    matrix.ensure_finite()?;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
            let scale = T::one().max(a.abs()).max(b.abs());
            if (a - b).abs() > T::of(1e-9) * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = matrix.clone();
    let mut v = Matrix::<T>::identity(n);
    let unit = T::of(1e-11).max(T::epsilon() * T::of(16.0));
    let tol = unit * T::of_usize(n.max(1)) * T::one().max(matrix.frobenius_norm());

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) >= tol {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[(r, p)] = new_rp;
                    a[(p, r)] = new_rp;
                    a[(r, q)] = new_rq;
                    a[(q, r)] = new_rq;
                }
                a[(p, p)] = a[(p, p)] - t * apq;
                a[(q, q)] = a[(q, q)] + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();

                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    if off_diagonal_norm(&a) >= tol {
        return Err(Error::invalid(format!(
            "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    // stable sort keeps ties in index order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = v.select_cols(&order);
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}
