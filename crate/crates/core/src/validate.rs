//! Internal validity indices, cross-tabulation, ARI and model selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{distance, squared_distance, Matrix};
use crate::scalar::Scalar;

fn cluster_sizes(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::invalid(format!("label {l} outside 0..{k}")));
        }
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    Ok(sizes)
}

/// Davies-Bouldin index with the supplied centers (centroids or medoids).
///
/// `s_i` is the mean distance of cluster `i` to its center and the index is
/// the mean over clusters of `max_{j != i} (s_i + s_j) / d(c_i, c_j)`.
pub fn davies_bouldin<T: Scalar>(
    points: &Matrix<T>,
    labels: &[usize],
    centers: &Matrix<T>,
) -> Result<T> {
    if labels.len() != points.rows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: points.rows(),
        });
    }
    let k = centers.rows();
    if k < 2 {
        return Err(Error::invalid(format!(
            "Davies-Bouldin needs k >= 2, got {k}"
        )));
    }
    if centers.cols() != points.cols() {
        return Err(Error::Schema(
            "centers and points differ in dimension".into(),
        ));
    }
    let sizes = cluster_sizes(labels, k)?;

    let mut scatter = vec![T::zero(); k];
    for (row, &l) in points.iter_rows().zip(labels) {
        scatter[l] = scatter[l] + distance(row, centers.row(l));
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s = *s / T::of_usize(n);
    }

    let mut total = T::zero();
    for i in 0..k {
        let mut worst = T::neg_infinity();
        for j in 0..k {
            if i == j {
                continue;
            }
            let dij = distance(centers.row(i), centers.row(j));
            if dij == T::zero() {
                return Err(Error::CoincidentCenters(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / dij);
        }
        total = total + worst;
    }
    Ok(total / T::of_usize(k))
}

/// Calinski-Harabasz variance ratio `(B / (k - 1)) / (W / (n - k))`.
pub fn calinski_harabasz<T: Scalar>(points: &Matrix<T>, labels: &[usize], k: usize) -> Result<T> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if k < 2 || k >= n {
        return Err(Error::invalid(format!(
            "Calinski-Harabasz needs 2 <= k < n, got k = {k}, n = {n}"
        )));
    }
    let sizes = cluster_sizes(labels, k)?;
    let d = points.cols();
    let overall = points.column_means();
    let mut centroids = Matrix::<T>::zeros(k, d);
    for (row, &l) in points.iter_rows().zip(labels) {
        for (c, &v) in centroids.row_mut(l).iter_mut().zip(row) {
            *c = *c + v;
        }
    }
    for (c, &s) in sizes.iter().enumerate() {
        let s = T::of_usize(s);
        centroids.row_mut(c).iter_mut().for_each(|v| *v = *v / s);
    }

    let between: T = (0..k)
        .map(|c| T::of_usize(sizes[c]) * squared_distance(centroids.row(c), &overall))
        .sum();
    let within: T = points
        .iter_rows()
        .zip(labels)
        .map(|(row, &l)| squared_distance(row, centroids.row(l)))
        .sum();
    if within == T::zero() {
        return Err(Error::PerfectClustering);
    }
    Ok((between / T::of_usize(k - 1)) / (within / T::of_usize(n - k)))
}

/// Contingency counts with margins; rows follow `labels_a`, columns `labels_b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crosstab {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
    pub row_totals: Vec<usize>,
    pub col_totals: Vec<usize>,
    pub total: usize,
}

impl Crosstab {
    /// Row totals, column totals and cells all reconcile to the grand total.
    pub fn margins_reconcile(&self) -> bool {
        let rows: usize = self.row_totals.iter().sum();
        let cols: usize = self.col_totals.iter().sum();
        let cells: usize = self.counts.iter().flatten().sum();
        let row_ok = self
            .counts
            .iter()
            .zip(&self.row_totals)
            .all(|(r, &t)| r.iter().sum::<usize>() == t);
        let col_ok = (0..self.col_labels.len())
            .all(|j| self.counts.iter().map(|r| r[j]).sum::<usize>() == self.col_totals[j]);
        rows == self.total && cols == self.total && cells == self.total && row_ok && col_ok
    }

    /// Layout: header `a\b,<col labels>,total`, one row per `a` label, then a `total` row.
    pub fn write_csv<W: std::io::Write>(&self, w: W, row_name: &str, col_name: &str) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![format!("{row_name}\\{col_name}")];
        header.extend(self.col_labels.iter().map(|l| l.to_string()));
        header.push("total".into());
        out.write_record(&header)?;
        for ((label, row), t) in self
            .row_labels
            .iter()
            .zip(&self.counts)
            .zip(&self.row_totals)
        {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            rec.push(t.to_string());
            out.write_record(&rec)?;
        }
        let mut rec = vec!["total".to_string()];
        rec.extend(self.col_totals.iter().map(|c| c.to_string()));
        rec.push(self.total.to_string());
        out.write_record(&rec)?;
        out.flush()?;
        Ok(())
    }
}

pub fn crosstab(labels_a: &[usize], labels_b: &[usize]) -> Result<Crosstab> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::LengthMismatch {
            left: labels_a.len(),
            right: labels_b.len(),
        });
    }
    let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
        let mut set: Vec<usize> = labels.to_vec();
        set.sort_unstable();
        set.dedup();
        set.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let ra = index(labels_a);
    let cb = index(labels_b);
    let mut counts = vec![vec![0usize; cb.len()]; ra.len()];
    for (a, b) in labels_a.iter().zip(labels_b) {
        counts[ra[a]][cb[b]] += 1;
    }
    let row_totals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<usize> = (0..cb.len())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    Ok(Crosstab {
        row_labels: ra.keys().copied().collect(),
        col_labels: cb.keys().copied().collect(),
        counts,
        row_totals,
        col_totals,
        total: labels_a.len(),
    })
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn adjusted_rand_index(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let table = crosstab(labels_a, labels_b)?;
    if table.total < 2 {
        return Err(Error::invalid("adjusted Rand index needs n >= 2"));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_totals.iter().map(|&c| pairs(c)).sum();
    let b: f64 = table.col_totals.iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(table.total);
    let max = (a + b) / 2.0;
    if max == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Index scores for one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub tag: String,
    pub k: usize,
    pub dbi: f64,
    pub chi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionFlag {
    /// One model wins on DBI, another on CHI; CHI decided.
    MetricsDisagree,
    /// Identical scores; the first model was kept.
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub tag: String,
    pub index: usize,
    pub flag: Option<SelectionFlag>,
}

/// Picks the model with the lowest DBI and highest CHI; when the two
/// disagree the CHI winner is taken and the disagreement flagged.
pub fn select_model(scores: &[ModelScore]) -> Result<Selection> {
    if scores.len() < 2 {
        return Err(Error::invalid(
            "model selection needs at least two scored models",
        ));
    }
    let first_best = |better: &dyn Fn(&ModelScore, &ModelScore) -> bool| {
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if better(s, &scores[best]) {
                best = i;
            }
        }
        best
    };
    let by_dbi = first_best(&|a, b| a.dbi < b.dbi);
    let by_chi = first_best(&|a, b| a.chi > b.chi);

    let winner = scores[by_chi].clone();
    let tied = scores
        .iter()
        .enumerate()
        .any(|(i, s)| i != by_chi && s.dbi == winner.dbi && s.chi == winner.chi);
    let flag = if tied {
        Some(SelectionFlag::Tie)
    } else if by_dbi != by_chi {
        Some(SelectionFlag::MetricsDisagree)
    } else {
        None
    };
    Ok(Selection {
        tag: winner.tag,
        index: by_chi,
        flag,
    })
}

/// Everything written to `validation.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub note: String,
    pub per_model: Vec<ModelScore>,
    pub crosstab: Crosstab,
    pub crosstab_rows: String,
    pub crosstab_cols: String,
    /// ARI of each model against planted labels, when a truth file is available.
    pub ari_by_model: BTreeMap<String, f64>,
    pub ari_vs_truth: Option<f64>,
    pub selected: Selection,
}

pub const CHI_NOTE: &str =
    "chi is the variance ratio (B/(k-1))/(W/(n-k)); k-medoids dbi uses medoids as centers";

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Matrix<f64> {
        Matrix::column_vector(xs)
    }

    /// Pair counting over all unordered pairs.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        let num = 2.0 * (ss * dd - sd * ds);
        let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    }

    #[test]
    fn dbi_hand_value() {
        let pts = line(&[0.0, 2.0, 10.0, 12.0]);
        let centers = line(&[1.0, 11.0]);
        let dbi = davies_bouldin(&pts, &[0, 0, 1, 1], &centers).unwrap();
        assert!((dbi - 0.2).abs() < 1e-12);
    }

    #[test]
    fn chi_hand_value() {
        let pts = line(&[0.0, 2.0, 10.0, 12.0]);
        let chi = calinski_harabasz(&pts, &[0, 0, 1, 1], 2).unwrap();
        assert!((chi - 50.0).abs() < 1e-12);
    }

    #[test]
    fn dbi_falls_and_chi_rises_with_separation() {
        let mut last: Option<(f64, f64)> = None;
        for shift in [10.0, 20.0, 40.0, 80.0] {
            let pts = line(&[0.0, 2.0, 1.0, shift, shift + 2.0, shift + 1.0]);
            let labels = [0, 0, 0, 1, 1, 1];
            let centers = line(&[1.0, shift + 1.0]);
            let dbi = davies_bouldin(&pts, &labels, &centers).unwrap();
            let chi = calinski_harabasz(&pts, &labels, 2).unwrap();
            if let Some((d, c)) = last {
                assert!(dbi < d && chi > c);
            }
            last = Some((dbi, chi));
        }
    }

    #[test]
    fn index_errors() {
        let pts = line(&[0.0, 2.0, 10.0, 12.0]);
        assert!(matches!(
            davies_bouldin(&pts, &[0, 0, 1, 1], &line(&[5.0, 5.0])),
            Err(Error::CoincidentCenters(0, 1))
        ));
        assert!(davies_bouldin(&pts, &[0, 0, 0, 0], &line(&[5.0])).is_err());
        assert!(matches!(
            calinski_harabasz(&line(&[1.0, 1.0, 5.0, 5.0]), &[0, 0, 1, 1], 2),
            Err(Error::PerfectClustering)
        ));
        assert!(calinski_harabasz(&pts, &[0, 1, 2, 3], 4).is_err());
        assert!(matches!(
            calinski_harabasz(&pts, &[0, 0, 2, 2], 3),
            Err(Error::EmptyCluster(1))
        ));
    }

    #[test]
    fn crosstab_cases() {
        let t = crosstab(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
        assert_eq!(t.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        let t = crosstab(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(t.counts, vec![vec![1, 1], vec![1, 1]]);
        assert!(t.margins_reconcile());
        assert!(crosstab(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn crosstab_csv_layout() {
        let t = crosstab(&[0, 0, 1], &[1, 0, 0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "kmeans", "kmedoids").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "kmeans\\kmedoids,0,1,total\n0,1,1,2\n1,1,0,1\ntotal,2,1,3\n"
        );
    }

    #[test]
    fn ari_cases() {
        assert_eq!(
            adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(),
            1.0
        );
        assert!(
            (adjusted_rand_index(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]).unwrap() - 1.0).abs() < 1e-12
        );
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v - ari_by_pairs(&[0, 0, 1, 1], &[0, 1, 0, 1])).abs() < 1e-12);
        assert!((v + 0.5).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
    }

    #[test]
    fn selection_rules() {
        let s = |tag: &str, dbi, chi| ModelScore {
            tag: tag.into(),
            k: 2,
            dbi,
            chi,
        };
        let sel =
            select_model(&[s("kmeans", 1.98, 68703.70), s("kmedoids", 2.06, 43040.85)]).unwrap();
        assert_eq!((sel.index, sel.flag), (0, None));

        let sel = select_model(&[s("a", 1.0, 10.0), s("b", 2.0, 20.0)]).unwrap();
        assert_eq!(
            (sel.tag.as_str(), sel.flag),
            ("b", Some(SelectionFlag::MetricsDisagree))
        );

        let sel = select_model(&[s("a", 1.0, 10.0), s("b", 1.0, 10.0)]).unwrap();
        assert_eq!(
            (sel.tag.as_str(), sel.flag),
            ("a", Some(SelectionFlag::Tie))
        );

        assert!(select_model(&[s("a", 1.0, 1.0)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ari_matches_pair_counting(
                a in proptest::collection::vec(0usize..4, 2..12),
                seed in any::<u64>(),
            ) {
                let b: Vec<usize> = a
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| ((x as u64 + seed.rotate_left(i as u32)) % 3) as usize)
                    .collect();
                let fast = adjusted_rand_index(&a, &b).unwrap();
                prop_assert!((fast - ari_by_pairs(&a, &b)).abs() < 1e-12);
            }

            #[test]
            fn crosstab_margins_always_reconcile(
                pairs in proptest::collection::vec((0usize..5, 0usize..7), 0..200),
            ) {
                let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
                let t = crosstab(&a, &b).unwrap();
                prop_assert!(t.margins_reconcile());
                prop_assert_eq!(t.total, a.len());
            }
        }
    }
}
