//! Planted-structure recovery on generated data, through the library API.

use lodgeclass::cluster::{
    clara, elbow_sweep, kmeans_best_of, pam, Algorithm, ClaraParams, KMeansParams, SweepParams,
};
use lodgeclass::data_model::ColumnKind;
use lodgeclass::ingestion::{generate_synthetic, SyntheticSpec};
use lodgeclass::pca::{fit_pca, project_features};
use lodgeclass::preprocess::{apply_plan, fit_plan, RawFrame, DEFAULT_SKEW_THRESHOLD};
use lodgeclass::validate::adjusted_rand_index;
use lodgeclass::Matrix64;

/// Kaiser-selected PCA scores of the standardized numeric features.
fn scores(n: usize, k: usize, sep: f64, seed: u64) -> (Matrix64, Vec<usize>) {
    let (records, truth) = generate_synthetic(&SyntheticSpec::new(n, k, sep, seed)).unwrap();
    let frame = RawFrame::from_records(&records);
    let plan = fit_plan(&frame, DEFAULT_SKEW_THRESHOLD).unwrap();
    let numeric = apply_plan(&frame, &plan)
        .unwrap()
        .filter_columns(|c| c.kind == ColumnKind::Numeric);
    let model = fit_pca(&numeric.values, numeric.column_names(), 1.0).unwrap();
    let projected = project_features(&numeric, &model, model.n_selected).unwrap();
    (projected.values, truth)
}

#[test]
fn kmeans_recovers_planted_clusters() {
    let (x, truth) = scores(2000, 4, 8.0, 11);
    let m = kmeans_best_of(&x, 4, 3, KMeansParams::default(), 10).unwrap();
    let ari = adjusted_rand_index(&m.labels, &truth).unwrap();
    assert!(ari >= 0.9, "ARI {ari}");
}

#[test]
fn clara_matches_pam_on_separated_data() {
    let (x, truth) = scores(300, 3, 10.0, 12);
    let p = pam(&x, 3, 1, 200).unwrap();
    let c = clara(&x, 3, 1, ClaraParams::default()).unwrap();
    // identical partitions up to relabeling
    assert_eq!(adjusted_rand_index(&p.labels, &c.labels).unwrap(), 1.0);
    assert!(adjusted_rand_index(&p.labels, &truth).unwrap() >= 0.9);
    assert!(c.inertia >= p.inertia - 1e-9 * p.inertia);
}

#[test]
fn elbow_finds_planted_k() {
    let (x, _) = scores(1500, 4, 10.0, 13);
    let ks: Vec<usize> = (2..=8).collect();
    for alg in [Algorithm::Kmeans, Algorithm::KmedoidsClara] {
        let curve = elbow_sweep(&x, &ks, alg, 5, SweepParams::default()).unwrap();
        assert!(curve.knee_detected, "{alg}: {:?}", curve.costs);
        assert_eq!(curve.selected_k, 4, "{alg}: {:?}", curve.costs);
    }
}

#[test]
fn elbow_reruns_are_identical() {
    let (x, _) = scores(400, 3, 8.0, 14);
    let ks = [2, 3, 4, 5];
    let a = elbow_sweep(&x, &ks, Algorithm::Kmeans, 9, SweepParams::default()).unwrap();
    let b = elbow_sweep(&x, &ks, Algorithm::Kmeans, 9, SweepParams::default()).unwrap();
    assert_eq!(a, b);
}
