use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{distance, Matrix};
use crate::scalar::Scalar;

use super::{check_points, Algorithm, ClusterModel};

pub const DEFAULT_MAX_SWAPS: usize = 200;
pub const DEFAULT_CLARA_SAMPLES: usize = 5;
const SWAP_TOL: f64 = 1e-12;

#[allow(clippy::needless_range_loop)]
fn distance_matrix<T: Scalar>(points: &Matrix<T>) -> Vec<Vec<T>> {
    let n = points.rows();
    let mut d = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = distance(points.row(i), points.row(j));
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Labels every point with its nearest medoid slot (ties low; medoid rows
/// pinned to their own slot) and sums the distances in row order.
fn assign_to_medoids<T: Scalar>(points: &Matrix<T>, medoids: &[usize]) -> (Vec<usize>, T) {
    let mut labels = Vec::with_capacity(points.rows());
    let mut cost = T::zero();
    for (i, row) in points.iter_rows().enumerate() {
        if let Some(slot) = medoids.iter().position(|&m| m == i) {
            labels.push(slot);
            continue;
        }
        let mut best = 0;
        let mut best_d = T::infinity();
        for (slot, &m) in medoids.iter().enumerate() {
            let d = distance(row, points.row(m));
            if d < best_d {
                best = slot;
                best_d = d;
            }
        }
        labels.push(best);
        cost = cost + best_d;
    }
    (labels, cost)
}

fn build<T: Scalar>(d: &[Vec<T>], k: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids = Vec::with_capacity(k);
    let first = (0..n)
        .map(|i| (i, d[i].iter().copied().sum::<T>()))
        .fold(
            (0, T::infinity()),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
        .0;
    medoids.push(first);
    let mut nearest: Vec<T> = d[first].clone();
    while medoids.len() < k {
        let mut best = None;
        let mut best_gain = T::neg_infinity();
        for (c, row) in d.iter().enumerate() {
            if medoids.contains(&c) {
                continue;
            }
            // d is symmetric, so row c holds every d[j][c]
            let gain: T = nearest
                .iter()
                .zip(row)
                .map(|(&near, &dc)| (near - dc).max(T::zero()))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best = Some(c);
            }
        }
        let c = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        for (near, &dc) in nearest.iter_mut().zip(&d[c]) {
            if dc < *near {
                *near = dc;
            }
        }
    }
    medoids
}

/// Nearest and second-nearest medoid distance per point, plus the nearest slot.
fn nearest_two<T: Scalar>(d: &[Vec<T>], medoids: &[usize]) -> Vec<(usize, T, T)> {
    (0..d.len())
        .map(|j| {
            let (mut s1, mut d1, mut d2) = (0, T::infinity(), T::infinity());
            for (slot, &m) in medoids.iter().enumerate() {
                let v = d[j][m];
                if v < d1 {
                    d2 = d1;
                    d1 = v;
                    s1 = slot;
                } else if v < d2 {
                    d2 = v;
                }
            }
            (s1, d1, d2)
        })
        .collect()
}

/// Partitioning Around Medoids: greedy BUILD, then best-improvement SWAP.
pub fn pam<T: Scalar>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    max_swaps: usize,
) -> Result<ClusterModel<T>> {
    check_points(points, k)?;
    let d = distance_matrix(points);
    let mut medoids = build(&d, k);
    let tol = T::of(SWAP_TOL);

    let mut swaps = 0;
    while swaps < max_swaps {
        let near = nearest_two(&d, &medoids);
        let mut best: Option<(usize, usize)> = None;
        let mut best_delta = T::zero();
        for slot in 0..k {
            for (h, row) in d.iter().enumerate() {
                if medoids.contains(&h) {
                    continue;
                }
                let mut delta = T::zero();
                for (&(s1, d1, d2), &dh) in near.iter().zip(row) {
                    delta = delta
                        + if s1 == slot {
                            dh.min(d2) - d1
                        } else {
                            dh.min(d1) - d1
                        };
                }
                if delta < best_delta {
                    best_delta = delta;
                    best = Some((slot, h));
                }
            }
        }
        match best {
            Some((slot, h)) if best_delta < -tol => {
                medoids[slot] = h;
                swaps += 1;
            }
            _ => break,
        }
    }

    let (labels, cost) = assign_to_medoids(points, &medoids);
    Ok(ClusterModel {
        algorithm: Algorithm::KmedoidsPam,
        k,
        labels,
        centers: points.select_rows(&medoids),
        medoid_row_indices: Some(medoids),
        inertia: cost,
        n_iter: swaps,
        seed,
        inertia_trace: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaraParams {
    pub n_samples: usize,
    /// Defaults to `min(n, 40 + 2k)`.
    pub sample_size: Option<usize>,
    pub max_swaps: usize,
}

impl Default for ClaraParams {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_CLARA_SAMPLES,
            sample_size: None,
            max_swaps: DEFAULT_MAX_SWAPS,
        }
    }
}

/// CLARA: PAM on seeded subsamples, keeping the medoids with the lowest full-data cost.
pub fn clara<T: Scalar>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    params: ClaraParams,
) -> Result<ClusterModel<T>> {
    check_points(points, k)?;
    let n = points.rows();
    let size = params.sample_size.unwrap_or((40 + 2 * k).min(n));
    if size < k {
        return Err(Error::invalid(format!(
            "sample_size {size} is smaller than k = {k}"
        )));
    }
    if size > n {
        return Err(Error::invalid(format!(
            "sample_size {size} exceeds n = {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, Vec<usize>, T, usize)> = None;
    for _ in 0..params.n_samples.max(1) {
        let mut idx = rand::seq::index::sample(&mut rng, n, size).into_vec();
        idx.sort_unstable();
        let sub = pam(&points.select_rows(&idx), k, seed, params.max_swaps)?;
        let medoids: Vec<usize> = sub
            .medoid_row_indices
            .expect("pam sets medoids")
            .iter()
            .map(|&m| idx[m])
            .collect();
        let (labels, cost) = assign_to_medoids(points, &medoids);
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((medoids, labels, cost, sub.n_iter));
        }
    }
    let (medoids, labels, cost, swaps) = best.expect("at least one sample");
    Ok(ClusterModel {
        algorithm: Algorithm::KmedoidsClara,
        k,
        labels,
        centers: points.select_rows(&medoids),
        medoid_row_indices: Some(medoids),
        inertia: cost,
        n_iter: swaps,
        seed,
        inertia_trace: Vec::new(),
    })
}
