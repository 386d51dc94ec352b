use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::{distance, squared_distance, Matrix};
use crate::scalar::Scalar;

use super::{check_points, nearest, Algorithm, ClusterModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves by this much (Euclidean).
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

/// k-means++ seeding: uniform first center, then D^2-weighted draws.
pub fn kmeans_pp_init<T: Scalar>(points: &Matrix<T>, k: usize, seed: u64) -> Result<Matrix<T>> {
    check_points(points, k)?;
    let n = points.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));

    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])).as_f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every point coincides with a chosen center
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            let d = squared_distance(points.row(i), points.row(next)).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }
    Ok(points.select_rows(&chosen))
}

fn assign<T: Scalar>(points: &Matrix<T>, centers: &Matrix<T>, labels: &mut [usize]) -> T {
    let mut cost = T::zero();
    for (i, row) in points.iter_rows().enumerate() {
        let (c, d) = nearest(row, centers);
        labels[i] = c;
        cost = cost + d * d;
    }
    cost
}

/// Moves the farthest point of a multi-point cluster into each empty cluster.
fn fill_empty<T: Scalar>(points: &Matrix<T>, centers: &Matrix<T>, labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, row) in points.iter_rows().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = distance(row, centers.row(labels[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn centroids<T: Scalar>(points: &Matrix<T>, labels: &[usize], k: usize) -> Matrix<T> {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, row) in points.iter_rows().enumerate() {
        counts[labels[i]] += 1;
        for (s, &v) in sums.row_mut(labels[i]).iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        let n = T::of_usize(count.max(1));
        sums.row_mut(c).iter_mut().for_each(|v| *v = *v / n);
    }
    sums
}

/// One Lloyd run from k-means++ seeds.
pub fn kmeans<T: Scalar>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    params: KMeansParams,
) -> Result<ClusterModel<T>> {
    check_points(points, k)?;
    let n = points.rows();
    let tol = T::of(params.tol);
    let mut centers = kmeans_pp_init(points, k, seed)?;
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut n_iter = 0;

    for _ in 0..params.max_iter.max(1) {
        n_iter += 1;
        trace.push(assign(points, &centers, &mut labels));
        fill_empty(points, &centers, &mut labels, k);
        let next = centroids(points, &labels, k);
        let shift = (0..k)
            .map(|c| distance(centers.row(c), next.row(c)))
            .fold(T::zero(), |a, b| a.max(b));
        centers = next;
        if shift < tol {
            break;
        }
    }

    let mut inertia = assign(points, &centers, &mut labels);
    let before = labels.clone();
    fill_empty(points, &centers, &mut labels, k);
    if labels != before {
        centers = centroids(points, &labels, k);
        inertia = points
            .iter_rows()
            .zip(&labels)
            .map(|(r, &l)| squared_distance(r, centers.row(l)))
            .sum();
    }
    trace.push(inertia);

    Ok(ClusterModel {
        algorithm: Algorithm::Kmeans,
        k,
        labels,
        centers,
        medoid_row_indices: None,
        inertia,
        n_iter,
        seed,
        inertia_trace: trace,
    })
}

/// Best of `n_init` Lloyd runs with seeds derived from `seed`; ties keep the earlier run.
pub fn kmeans_best_of<T: Scalar>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    params: KMeansParams,
    n_init: usize,
) -> Result<ClusterModel<T>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterModel<T>> = None;
    for _ in 0..n_init.max(1) {
        let mut model = kmeans(points, k, seeds.next_u64(), params)?;
        model.seed = seed;
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one run"))
}
