//! Elbow selection over a k sweep using the kneedle difference curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::{clara, kmeans_best_of, pam, Algorithm, ClaraParams, KMeansParams};

pub const DEFAULT_SENSITIVITY: f64 = 1.0;
const FLAT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve<T> {
    pub ks: Vec<usize>,
    pub costs: Vec<T>,
    pub selected_k: usize,
    pub sensitivity: f64,
    /// False when kneedle found no knee and `selected_k` fell back to the smallest k.
    pub knee_detected: bool,
}

impl<T: Scalar> ElbowCurve<T> {
    /// `k,cost,selected` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "cost", "selected"])?;
        for (&k, c) in self.ks.iter().zip(&self.costs) {
            out.write_record([
                k.to_string(),
                c.to_string(),
                u8::from(k == self.selected_k).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Outcome of a kneedle search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KneeResult {
    Knee(usize),
    NoKnee,
    TooFewPoints,
}

impl KneeResult {
    pub fn k(self) -> Option<usize> {
        match self {
            KneeResult::Knee(k) => Some(k),
            _ => None,
        }
    }
}

/// Kneedle on a decreasing convex cost curve.
///
/// Both axes are min-max normalised; the difference curve is
/// `(1 - y) - x`. Each local maximum of it is a candidate whose threshold is
/// its value minus `sensitivity` times the mean x spacing; the first
/// candidate whose curve later falls strictly below the threshold, before the
/// next candidate, is the knee.
pub fn kneedle<T: Scalar>(ks: &[usize], costs: &[T], sensitivity: f64) -> Result<KneeResult> {
    if ks.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: ks.len(),
            right: costs.len(),
        });
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("ks must be strictly ascending"));
    }
    let m = ks.len();
    if m < 3 {
        return Ok(KneeResult::TooFewPoints);
    }
    let ys: Vec<f64> = costs.iter().map(|c| c.as_f64()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("costs must be finite"));
    }

    let (x0, x1) = (ks[0] as f64, ks[m - 1] as f64);
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ymax - ymin <= 0.0 {
        return Ok(KneeResult::NoKnee);
    }
    let x: Vec<f64> = ks.iter().map(|&k| (k as f64 - x0) / (x1 - x0)).collect();
    let diff: Vec<f64> = ys
        .iter()
        .zip(&x)
        .map(|(y, xi)| (1.0 - (y - ymin) / (ymax - ymin)) - xi)
        .collect();

    let candidates: Vec<usize> = (1..m - 1)
        .filter(|&i| diff[i] > FLAT_EPS && diff[i] > diff[i - 1] && diff[i] >= diff[i + 1])
        .collect();
    let spacing = 1.0 / (m - 1) as f64;
    for (c, &i) in candidates.iter().enumerate() {
        let threshold = diff[i] - sensitivity * spacing;
        let end = candidates.get(c + 1).copied().unwrap_or(m);
        if (i + 1..end).any(|j| diff[j] < threshold) {
            return Ok(KneeResult::Knee(ks[i]));
        }
    }
    Ok(KneeResult::NoKnee)
}

/// Per-algorithm settings used by [`elbow_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub kmeans: KMeansParams,
    pub n_init: usize,
    pub clara: ClaraParams,
    pub sensitivity: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            kmeans: KMeansParams::default(),
            n_init: 10,
            clara: ClaraParams::default(),
            sensitivity: DEFAULT_SENSITIVITY,
        }
    }
}

/// Fits `algorithm` for every k and picks the knee of the cost curve.
pub fn elbow_sweep<T: Scalar>(
    points: &Matrix<T>,
    ks: &[usize],
    algorithm: Algorithm,
    seed: u64,
    params: SweepParams,
) -> Result<ElbowCurve<T>> {
    if ks.is_empty() {
        return Err(Error::invalid("elbow sweep needs at least one k"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("ks must be strictly ascending"));
    }
    let mut costs = Vec::with_capacity(ks.len());
    for &k in ks {
        let model = match algorithm {
            Algorithm::Kmeans => kmeans_best_of(points, k, seed, params.kmeans, params.n_init)?,
            Algorithm::KmedoidsClara => clara(points, k, seed, params.clara)?,
            Algorithm::KmedoidsPam => pam(points, k, seed, params.clara.max_swaps)?,
        };
        costs.push(model.inertia);
    }
    let knee = kneedle(ks, &costs, params.sensitivity)?;
    Ok(ElbowCurve {
        ks: ks.to_vec(),
        selected_k: knee.k().unwrap_or(ks[0]),
        knee_detected: knee.k().is_some(),
        costs,
        sensitivity: params.sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Arg-max of the normalised difference curve, computed directly.
    fn max_difference_k(ks: &[usize], costs: &[f64]) -> usize {
        let (x0, x1) = (ks[0] as f64, *ks.last().unwrap() as f64);
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (&k, &c)) in ks.iter().zip(costs).enumerate() {
            let d = (hi - c) / (hi - lo) - (k as f64 - x0) / (x1 - x0);
            if d > best.1 {
                best = (i, d);
            }
        }
        ks[best.0]
    }

    #[test]
    fn classic_elbow_at_three() {
        let ks = [1, 2, 3, 4, 5, 6];
        let costs = [100.0, 40.0, 20.0, 18.0, 17.0, 16.5];
        assert_eq!(max_difference_k(&ks, &costs), 3);
        assert_eq!(kneedle(&ks, &costs, 1.0).unwrap(), KneeResult::Knee(3));
    }

    #[test]
    fn right_angle_at_two() {
        assert_eq!(
            kneedle(&[1, 2, 3, 4], &[100.0, 1.0, 1.0, 1.0], 1.0).unwrap(),
            KneeResult::Knee(2)
        );
    }

    #[test]
    fn linear_has_no_knee() {
        let ks: Vec<usize> = (1..=8).collect();
        let costs: Vec<f64> = ks.iter().map(|&k| 100.0 - 7.0 * k as f64).collect();
        assert_eq!(kneedle(&ks, &costs, 1.0).unwrap(), KneeResult::NoKnee);
    }

    #[test]
    fn short_input_flagged() {
        assert_eq!(
            kneedle(&[2, 3], &[5.0, 1.0], 1.0).unwrap(),
            KneeResult::TooFewPoints
        );
        assert!(kneedle(&[3, 2, 1], &[5.0, 4.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn high_sensitivity_suppresses_knee() {
        let ks = [1, 2, 3, 4, 5, 6];
        let costs = [100.0, 40.0, 20.0, 18.0, 17.0, 16.5];
        assert_eq!(kneedle(&ks, &costs, 10.0).unwrap(), KneeResult::NoKnee);
    }

    #[test]
    fn sweep_flags_single_k_and_linear_curve() {
        let pts = Matrix::column_vector(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let c = elbow_sweep(&pts, &[2], Algorithm::Kmeans, 1, SweepParams::default()).unwrap();
        assert_eq!(c.selected_k, 2);
        assert!(!c.knee_detected);
    }

    #[test]
    fn sweep_finds_planted_groups() {
        let mut xs = Vec::new();
        for g in 0..3 {
            for i in 0..10 {
                xs.push(g as f64 * 100.0 + i as f64 * 0.1);
            }
        }
        let pts = Matrix::column_vector(&xs);
        for alg in [Algorithm::Kmeans, Algorithm::KmedoidsClara] {
            let c = elbow_sweep(&pts, &[1, 2, 3, 4, 5, 6], alg, 3, SweepParams::default()).unwrap();
            assert_eq!(c.selected_k, 3, "{alg}");
            assert!(c.knee_detected);
            let mut buf = Vec::new();
            c.write_csv(&mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            assert!(text.starts_with("k,cost,selected\n"));
            assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
        }
    }
}
