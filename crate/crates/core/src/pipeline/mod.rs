//! Staged, file-backed pipeline: every stage reads the previous stage's
//! files from the output directory and writes its own.

mod config;
mod io;

pub use config::{PipelineConfig, DEFAULT_SYNTHETIC_N, DEFAULT_SYNTHETIC_SEP};
pub use io::{read_feature_matrix, write_feature_matrix};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{
    clara, elbow_sweep, kmeans_best_of, pam, Algorithm, ClusterModel, ElbowCurve,
};
use crate::data_model::{ColumnKind, ColumnMeta, FeatureMatrix, PropertyRecord};
use crate::error::{Error, Result};
use crate::ingestion::{
    self, generate_synthetic, lookup_from_records, read_lsoa_table, read_truth, write_lsoa_table,
    write_properties, write_truth, IngestReport,
};
use crate::pca::{fit_pca, project_features};
use crate::preprocess::{
    apply_plan, duplicate_numeric_columns, fit_plan, PreprocessPlan, RawFrame,
};
use crate::profile::{
    attach_plan_means, descriptive_series, export_cluster_points, plan_cluster_means,
    profile_clusters, read_labels_csv, urban_rural_distribution, write_labels_csv,
    write_series_csv, write_urban_rural_csv, ClusterProfile,
};
use crate::validate::{
    adjusted_rand_index, calinski_harabasz, crosstab, davies_bouldin, select_model, ModelScore,
    ValidationReport, CHI_NOTE,
};

pub const SYNTHETIC_CSV: &str = "synthetic.csv";
pub const SYNTHETIC_TRUTH: &str = "synthetic.truth.csv";
pub const SYNTHETIC_LSOA: &str = "synthetic.lsoa.csv";
pub const RECORDS_CSV: &str = "records.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const PLAN_JSON: &str = "plan.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const FEATURE_COLUMNS: &str = "feature_columns.json";
pub const PCA_MODEL: &str = "pca_model.json";
pub const PCA_LOADINGS: &str = "pca_loadings.csv";
pub const PCA_VARIANCE: &str = "pca_variance.csv";
pub const CLUSTER_SPACE_CSV: &str = "cluster_space.csv";
pub const CLUSTER_SPACE_COLUMNS: &str = "cluster_space_columns.json";
pub const ELBOW_CSV: &str = "elbow.csv";
pub const ELBOW_JSON: &str = "elbow.json";
pub const VALIDATION_JSON: &str = "validation.json";
pub const CROSSTAB_CSV: &str = "crosstab.csv";
pub const LABELS_CSV: &str = "labels.csv";
pub const PROFILES_JSON: &str = "profiles.json";
pub const URBAN_RURAL_CSV: &str = "urban_rural.csv";
pub const SERIES_REVENUE_CSV: &str = "series_revenue.csv";
pub const SERIES_OCCUPANCY_CSV: &str = "series_occupancy.csv";
pub const CLUSTER_POINTS_CSV: &str = "cluster_points.csv";
pub const MANIFEST_JSON: &str = "run_manifest.json";

/// Model tags used in file names and reports.
pub const KMEANS_TAG: &str = "kmeans";
pub const KMEDOIDS_TAG: &str = "kmedoids";

fn model_json(tag: &str) -> String {
    format!("model_{tag}.json")
}

fn labels_csv(tag: &str) -> String {
    format!("labels_{tag}.csv")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub n: usize,
    pub k: usize,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub rows: usize,
    pub columns: usize,
    pub log_columns: Vec<String>,
    pub dropped_constant: Vec<String>,
    pub dropped_duplicates: Vec<String>,
    pub imputed_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub n_selected: usize,
    pub cumulative_explained: f64,
    pub cluster_space_columns: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub sizes: BTreeMap<String, Vec<usize>>,
    pub inertia: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilesFile {
    pub model: String,
    pub k: usize,
    pub n: usize,
    pub profiles: Vec<ClusterProfile>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub clusters: usize,
    pub points_skipped: usize,
    pub months: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u128,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    pub ingest: Option<IngestReport>,
    pub feature_rows: Option<usize>,
    pub feature_columns: Option<usize>,
    pub pca_components: Option<usize>,
    pub cluster_space_columns: Option<usize>,
    pub cluster_sizes: BTreeMap<String, Vec<usize>>,
    pub profiled_rows: Option<usize>,
    pub points_skipped: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub generate: Option<u64>,
    pub kmeans: u64,
    pub kmedoids: u64,
    pub elbow: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub row_counts: RowCounts,
    pub stages: Vec<StageTiming>,
    pub elbow_selected_k: Option<usize>,
    pub selected_model: Option<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs stages against one validated configuration.
#[derive(Clone, Debug)]
pub struct Pipeline {
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(&config.out).map_err(|source| Error::File {
            path: config.out.display().to_string(),
            source,
        })?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn seeds(&self) -> Seeds {
        let s = self.config.seed;
        Seeds {
            generate: self.config.is_synthetic().then_some(s),
            kmeans: s,
            kmedoids: s,
            elbow: s,
        }
    }

    /// Writes the synthetic property file, its planted labels and its LSOA lookup.
    pub fn generate(&self) -> Result<GenerateSummary> {
        let spec = self.config.synthetic_spec()?;
        let (records, truth) = generate_synthetic(&spec)?;
        let files = vec![
            self.path(SYNTHETIC_CSV),
            self.path(SYNTHETIC_TRUTH),
            self.path(SYNTHETIC_LSOA),
        ];
        write_properties(&files[0], &records)?;
        let ids: Vec<String> = records.iter().map(|r| r.property_id.clone()).collect();
        write_truth(&files[1], &ids, &truth)?;
        write_lsoa_table(&files[2], &lookup_from_records(&records)?)?;
        Ok(GenerateSummary {
            n: records.len(),
            k: spec.n_clusters,
            files,
        })
    }

    fn input_paths(&self) -> (PathBuf, Option<PathBuf>) {
        match &self.config.properties {
            Some(p) => (p.clone(), self.config.lsoa.clone()),
            None => (self.path(SYNTHETIC_CSV), Some(self.path(SYNTHETIC_LSOA))),
        }
    }

    fn truth_path(&self) -> Option<PathBuf> {
        if self.config.is_synthetic() {
            Some(self.path(SYNTHETIC_TRUTH))
        } else {
            self.config.truth.clone()
        }
    }

    /// Loads, filters and joins the input; fails when nothing survives.
    pub fn ingest(&self) -> Result<IngestReport> {
        let (properties, lsoa) = self.input_paths();
        let lookup = lsoa.as_deref().map(read_lsoa_table).transpose()?;
        let (records, report) =
            ingestion::ingest(&properties, self.config.window()?, lookup.as_ref())?;
        write_json(&self.path(INGEST_REPORT), &report)?;
        write_properties(&self.path(RECORDS_CSV), &records)?;
        if records.is_empty() {
            return Err(Error::Ingest(format!(
                "no records left after filtering ({} read, {} outside window, {} without lookup match, {} invalid)",
                report.rows_read, report.rows_dropped_window, report.rows_dropped_join_miss, report.rows_dropped_invalid
            )));
        }
        Ok(report)
    }

    fn read_records(&self) -> Result<Vec<PropertyRecord>> {
        let (records, report) =
            ingestion::load_properties(&self.path(RECORDS_CSV), self.config.window()?)?;
        if report.rows_kept != report.rows_read {
            return Err(Error::Schema(format!(
                "{} holds {} rows that no longer pass ingestion",
                RECORDS_CSV,
                report.rows_read - report.rows_kept
            )));
        }
        Ok(records)
    }

    pub fn preprocess(&self) -> Result<PreprocessSummary> {
        let records = self.read_records()?;
        let mut frame = RawFrame::from_records(&records);
        let mut dropped_duplicates = Vec::new();
        if self.config.drop_duplicate_columns {
            for (_, dup) in duplicate_numeric_columns(&frame) {
                if !dropped_duplicates.contains(&dup) {
                    dropped_duplicates.push(dup);
                }
            }
            frame
                .numeric
                .retain(|c| !dropped_duplicates.contains(&c.name));
        }
        let plan = fit_plan(&frame, self.config.skew_threshold)?;
        let fm = apply_plan(&frame, &plan)?;
        fm.check_invariants()?;
        std::fs::write(self.path(PLAN_JSON), plan.to_json()? + "\n")?;
        write_feature_matrix(&self.path(FEATURES_CSV), &self.path(FEATURE_COLUMNS), &fm)?;
        Ok(PreprocessSummary {
            rows: fm.n_rows(),
            columns: fm.columns.len(),
            log_columns: plan.log_columns.clone(),
            dropped_constant: plan.dropped_constant.clone(),
            dropped_duplicates,
            imputed_total: plan.imputed_total,
        })
    }

    /// PCA on the standardized numeric columns; the clustering space is the
    /// Kaiser-selected scores followed by the encoded categorical columns.
    pub fn pca(&self) -> Result<PcaSummary> {
        let fm = read_feature_matrix(&self.path(FEATURES_CSV), &self.path(FEATURE_COLUMNS))?;
        let numeric = fm.filter_columns(|c| c.kind == ColumnKind::Numeric);
        let encoded = fm.filter_columns(|c| c.kind != ColumnKind::Numeric);
        let model = fit_pca(
            &numeric.values,
            numeric.column_names(),
            self.config.kaiser_threshold,
        )?;
        let scores = project_features(&numeric, &model, model.n_selected)?;

        let values = scores.values.hstack(&encoded.values)?;
        let columns: Vec<ColumnMeta> = scores
            .columns
            .iter()
            .chain(&encoded.columns)
            .cloned()
            .collect();
        let space = FeatureMatrix::new(values, columns, fm.row_ids.clone())?;

        write_json(&self.path(PCA_MODEL), &model)?;
        let mut w = ingestion::create(&self.path(PCA_LOADINGS))?;
        model.loadings_table().write_csv(&mut w)?;
        let mut out = csv::Writer::from_writer(ingestion::create(&self.path(PCA_VARIANCE))?);
        for row in model.variance_table() {
            out.serialize(row)?;
        }
        out.flush()?;
        write_feature_matrix(
            &self.path(CLUSTER_SPACE_CSV),
            &self.path(CLUSTER_SPACE_COLUMNS),
            &space,
        )?;
        Ok(PcaSummary {
            n_selected: model.n_selected,
            cumulative_explained: model.cumulative_explained(model.n_selected),
            cluster_space_columns: space.columns.len(),
            warnings: model.warnings.clone(),
        })
    }

    fn cluster_space(&self) -> Result<FeatureMatrix> {
        read_feature_matrix(
            &self.path(CLUSTER_SPACE_CSV),
            &self.path(CLUSTER_SPACE_COLUMNS),
        )
    }

    /// Fits k-means and k-medoids on the clustering space, concurrently.
    pub fn cluster(&self) -> Result<ClusterSummary> {
        let space = self.cluster_space()?;
        let c = &self.config;
        let points = &space.values;
        let (km, kmed) = std::thread::scope(|s| {
            let km = s.spawn(|| {
                kmeans_best_of(
                    points,
                    c.kmeans_k,
                    c.seed,
                    c.kmeans_params(),
                    c.kmeans_n_init,
                )
            });
            let kmed = s.spawn(|| match c.kmedoids_algorithm {
                Algorithm::KmedoidsPam => pam(points, c.kmedoids_k, c.seed, c.max_swaps),
                _ => clara(points, c.kmedoids_k, c.seed, c.clara_params()),
            });
            (
                km.join().expect("k-means worker panicked"),
                kmed.join().expect("k-medoids worker panicked"),
            )
        });
        let mut summary = ClusterSummary {
            sizes: BTreeMap::new(),
            inertia: BTreeMap::new(),
        };
        for (tag, model) in [(KMEANS_TAG, km?), (KMEDOIDS_TAG, kmed?)] {
            model.check_invariants(points.rows())?;
            write_json(&self.path(&model_json(tag)), &model)?;
            write_labels_csv(
                ingestion::create(&self.path(&labels_csv(tag)))?,
                &space.row_ids,
                &model.labels,
            )?;
            summary.sizes.insert(tag.to_string(), model.cluster_sizes());
            summary.inertia.insert(tag.to_string(), model.inertia);
        }
        Ok(summary)
    }

    /// Cost sweep over `k_list` with kneedle selection.
    pub fn elbow(&self) -> Result<ElbowCurve<f64>> {
        let space = self.cluster_space()?;
        let n = space.n_rows();
        if let Some(&k) = self.config.k_list.iter().find(|&&k| k > n) {
            return Err(Error::TooManyClusters { k, n });
        }
        let curve = elbow_sweep(
            &space.values,
            &self.config.k_list,
            self.config.elbow_algorithm,
            self.config.seed,
            self.config.sweep_params(),
        )?;
        curve.write_csv(ingestion::create(&self.path(ELBOW_CSV))?)?;
        write_json(&self.path(ELBOW_JSON), &curve)?;
        Ok(curve)
    }

    fn load_model(&self, tag: &str, n: usize) -> Result<ClusterModel<f64>> {
        let model: ClusterModel<f64> = read_json(&self.path(&model_json(tag)))?;
        model.check_invariants(n)?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let space = self.cluster_space()?;
        let n = space.n_rows();
        let models = [
            (KMEANS_TAG, self.load_model(KMEANS_TAG, n)?),
            (KMEDOIDS_TAG, self.load_model(KMEDOIDS_TAG, n)?),
        ];
        let mut scores = Vec::new();
        for (tag, m) in &models {
            scores.push(ModelScore {
                tag: tag.to_string(),
                k: m.k,
                dbi: davies_bouldin(&space.values, &m.labels, &m.centers)?,
                chi: calinski_harabasz(&space.values, &m.labels, m.k)?,
            });
        }
        let selected = select_model(&scores)?;
        let table = crosstab(&models[0].1.labels, &models[1].1.labels)?;

        let mut ari_by_model = BTreeMap::new();
        if let Some(path) = self.truth_path() {
            let truth = read_truth(&path)?;
            let planted = space
                .row_ids
                .iter()
                .map(|id| {
                    truth.get(id).copied().ok_or_else(|| {
                        Error::Schema(format!("{} has no label for `{id}`", path.display()))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            for (tag, m) in &models {
                ari_by_model.insert(tag.to_string(), adjusted_rand_index(&m.labels, &planted)?);
            }
        }
        let report = ValidationReport {
            note: CHI_NOTE.to_string(),
            per_model: scores,
            crosstab: table,
            crosstab_rows: KMEANS_TAG.to_string(),
            crosstab_cols: KMEDOIDS_TAG.to_string(),
            ari_vs_truth: ari_by_model.get(&selected.tag).copied(),
            ari_by_model,
            selected,
        };
        write_json(&self.path(VALIDATION_JSON), &report)?;
        report.crosstab.write_csv(
            ingestion::create(&self.path(CROSSTAB_CSV))?,
            KMEANS_TAG,
            KMEDOIDS_TAG,
        )?;
        let chosen = &models[report.selected.index].1;
        write_labels_csv(
            ingestion::create(&self.path(LABELS_CSV))?,
            &space.row_ids,
            &chosen.labels,
        )?;
        Ok(report)
    }

    /// Profiles the selected model from `labels.csv`.
    pub fn profile(&self) -> Result<ProfileSummary> {
        let records = self.read_records()?;
        let rows = read_labels_csv(ingestion::open(&self.path(LABELS_CSV))?)?;
        if rows.len() != records.len()
            || rows
                .iter()
                .zip(&records)
                .any(|((id, _), r)| *id != r.property_id)
        {
            return Err(Error::Schema(format!(
                "{LABELS_CSV} does not line up with {RECORDS_CSV}"
            )));
        }
        let labels: Vec<usize> = rows.into_iter().map(|(_, l)| l).collect();
        let validation: ValidationReport = read_json(&self.path(VALIDATION_JSON))?;

        let mut report = profile_clusters(&records, &labels)?;
        let plan = PreprocessPlan::from_json(&std::fs::read_to_string(self.path(PLAN_JSON))?)?;
        let fm = read_feature_matrix(&self.path(FEATURES_CSV), &self.path(FEATURE_COLUMNS))?;
        attach_plan_means(&mut report, &plan_cluster_means(&fm, &plan, &labels)?);
        let k = report.profiles.len();
        write_json(
            &self.path(PROFILES_JSON),
            &ProfilesFile {
                model: validation.selected.tag,
                k,
                n: report.n,
                profiles: report.profiles,
                warnings: report.warnings,
            },
        )?;

        let ur = urban_rural_distribution(&records, &labels)?;
        write_urban_rural_csv(ingestion::create(&self.path(URBAN_RURAL_CSV))?, &ur)?;
        let series = descriptive_series(&records, self.config.window()?);
        write_series_csv(
            ingestion::create(&self.path(SERIES_REVENUE_CSV))?,
            series.window,
            &series.revenue,
        )?;
        write_series_csv(
            ingestion::create(&self.path(SERIES_OCCUPANCY_CSV))?,
            series.window,
            &series.occupancy,
        )?;
        let skipped = export_cluster_points(
            ingestion::create(&self.path(CLUSTER_POINTS_CSV))?,
            &records,
            &labels,
        )?;
        Ok(ProfileSummary {
            clusters: k,
            points_skipped: skipped,
            months: series.revenue.len(),
        })
    }

    /// Every stage in order, then `run_manifest.json`. The manifest is written
    /// even when a stage fails, naming that stage.
    pub fn run(&self) -> (RunManifest, Result<()>) {
        let mut manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            seeds: self.seeds(),
            row_counts: RowCounts::default(),
            stages: Vec::new(),
            elbow_selected_k: None,
            selected_model: None,
            failed_stage: None,
            error: None,
        };
        let result = self.run_stages(&mut manifest);
        if let Err(e) = &result {
            manifest.error = Some(e.to_string());
        }
        let written = write_json(&self.path(MANIFEST_JSON), &manifest);
        (manifest, result.and(written))
    }

    fn run_stages(&self, m: &mut RunManifest) -> Result<()> {
        fn timed<T>(m: &mut RunManifest, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
            let start = Instant::now();
            let out = f();
            m.stages.push(StageTiming {
                stage: stage.to_string(),
                millis: start.elapsed().as_millis(),
                ok: out.is_ok(),
            });
            if out.is_err() {
                m.failed_stage = Some(stage.to_string());
            }
            out
        }

        if self.config.is_synthetic() {
            timed(m, "generate", || self.generate())?;
        }
        match timed(m, "ingest", || self.ingest()) {
            Ok(report) => m.row_counts.ingest = Some(report),
            Err(e) => {
                // an emptied input still leaves its report behind
                m.row_counts.ingest = read_json(&self.path(INGEST_REPORT)).ok();
                return Err(e);
            }
        }
        let pre = timed(m, "preprocess", || self.preprocess())?;
        m.row_counts.feature_rows = Some(pre.rows);
        m.row_counts.feature_columns = Some(pre.columns);
        let pca = timed(m, "pca", || self.pca())?;
        m.row_counts.pca_components = Some(pca.n_selected);
        m.row_counts.cluster_space_columns = Some(pca.cluster_space_columns);
        let cl = timed(m, "cluster", || self.cluster())?;
        m.row_counts.cluster_sizes = cl.sizes;
        let curve = timed(m, "elbow", || self.elbow())?;
        m.elbow_selected_k = Some(curve.selected_k);
        let val = timed(m, "validate", || self.validate())?;
        m.selected_model = Some(val.selected.tag);
        let prof = timed(m, "profile", || self.profile())?;
        m.row_counts.profiled_rows = m.row_counts.feature_rows;
        m.row_counts.points_skipped = Some(prof.points_skipped);
        Ok(())
    }
}
