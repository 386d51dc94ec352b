use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cluster::{Algorithm, ClaraParams, KMeansParams, SweepParams, DEFAULT_MAX_SWAPS};
use crate::data_model::{window_end, window_start, DateWindow};
use crate::error::{Error, Result};
use crate::ingestion::SyntheticSpec;
use crate::pca::DEFAULT_KAISER_THRESHOLD;
use crate::preprocess::DEFAULT_SKEW_THRESHOLD;

/// Flat key/value run configuration, read from TOML.
///
/// The data source is either `properties` (plus optional `lsoa` and `truth`)
/// or the `synthetic_*` keys, never both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub properties: Option<PathBuf>,
    pub lsoa: Option<PathBuf>,
    pub truth: Option<PathBuf>,

    pub synthetic_n: Option<usize>,
    pub synthetic_k: Option<usize>,
    pub synthetic_sep: Option<f64>,
    pub synthetic_urban_fraction: Option<f64>,
    pub synthetic_uplift: Option<f64>,

    #[serde(deserialize_with = "toml_date")]
    pub window_start: NaiveDate,
    #[serde(deserialize_with = "toml_date")]
    pub window_end: NaiveDate,
    pub skew_threshold: f64,
    pub kaiser_threshold: f64,
    pub drop_duplicate_columns: bool,

    pub kmeans_k: usize,
    pub kmedoids_k: usize,
    /// `kmedoids_clara` or `kmedoids_pam`.
    pub kmedoids_algorithm: Algorithm,
    pub kmeans_n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub clara_samples: usize,
    pub clara_sample_size: Option<usize>,
    pub max_swaps: usize,

    pub k_list: Vec<usize>,
    pub elbow_algorithm: Algorithm,
    pub sensitivity: f64,

    pub seed: u64,
    pub out: PathBuf,
}

/// Accepts a bare TOML date (`2020-01-30`) or a quoted one.
fn toml_date<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Native(toml::value::Datetime),
        Text(String),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Native(dt) => dt.to_string(),
        Raw::Text(s) => s,
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(serde::de::Error::custom)
}

pub const DEFAULT_SYNTHETIC_N: usize = 2000;
pub const DEFAULT_SYNTHETIC_SEP: f64 = 8.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        let km = KMeansParams::default();
        let clara = ClaraParams::default();
        Self {
            properties: None,
            lsoa: None,
            truth: None,
            synthetic_n: None,
            synthetic_k: None,
            synthetic_sep: None,
            synthetic_urban_fraction: None,
            synthetic_uplift: None,
            window_start: window_start(),
            window_end: window_end(),
            skew_threshold: DEFAULT_SKEW_THRESHOLD,
            kaiser_threshold: DEFAULT_KAISER_THRESHOLD,
            drop_duplicate_columns: false,
            kmeans_k: 4,
            kmedoids_k: 6,
            kmedoids_algorithm: Algorithm::KmedoidsClara,
            kmeans_n_init: 10,
            max_iter: km.max_iter,
            tol: km.tol,
            clara_samples: clara.n_samples,
            clara_sample_size: clara.sample_size,
            max_swaps: DEFAULT_MAX_SWAPS,
            k_list: (2..=8).collect(),
            elbow_algorithm: Algorithm::Kmeans,
            sensitivity: crate::cluster::DEFAULT_SENSITIVITY,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic_n.is_some()
            || self.synthetic_k.is_some()
            || self.synthetic_sep.is_some()
            || self.synthetic_urban_fraction.is_some()
            || self.synthetic_uplift.is_some()
    }

    pub fn window(&self) -> Result<DateWindow> {
        DateWindow::new(self.window_start, self.window_end)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Generator settings; `synthetic_k` is required, the rest have defaults.
    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let k = self
            .synthetic_k
            .ok_or_else(|| Error::Config("synthetic data needs `synthetic_k`".into()))?;
        let mut spec = SyntheticSpec::new(
            self.synthetic_n.unwrap_or(DEFAULT_SYNTHETIC_N),
            k,
            self.synthetic_sep.unwrap_or(DEFAULT_SYNTHETIC_SEP),
            self.seed,
        );
        if let Some(u) = self.synthetic_urban_fraction {
            spec.urban_fraction = u;
        }
        if let Some(u) = self.synthetic_uplift {
            spec.rural_occupancy_uplift = u;
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn clara_params(&self) -> ClaraParams {
        ClaraParams {
            n_samples: self.clara_samples,
            sample_size: self.clara_sample_size,
            max_swaps: self.max_swaps,
        }
    }

    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            kmeans: self.kmeans_params(),
            n_init: self.kmeans_n_init,
            clara: self.clara_params(),
            sensitivity: self.sensitivity,
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match (self.properties.is_some(), self.is_synthetic()) {
            (true, true) => {
                return fail("give either `properties` or `synthetic_*` keys, not both".into())
            }
            (false, false) => {
                return fail("no data source: set `properties` or `synthetic_k`".into())
            }
            (false, true) => {
                self.synthetic_spec()?;
            }
            (true, false) => {}
        }
        if self.is_synthetic() && (self.lsoa.is_some() || self.truth.is_some()) {
            return fail("`lsoa` and `truth` only apply to file input".into());
        }
        self.window()?;
        if !(self.skew_threshold.is_finite() && self.skew_threshold > 0.0) {
            return fail(format!(
                "skew_threshold must be > 0, got {}",
                self.skew_threshold
            ));
        }
        if !(self.kaiser_threshold.is_finite() && self.kaiser_threshold >= 0.0) {
            return fail(format!(
                "kaiser_threshold must be >= 0, got {}",
                self.kaiser_threshold
            ));
        }
        if self.kmeans_k < 2 || self.kmedoids_k < 2 {
            return fail("kmeans_k and kmedoids_k must be >= 2 for validation".into());
        }
        if !self.kmedoids_algorithm.is_medoid() {
            return fail("kmedoids_algorithm must be kmedoids_clara or kmedoids_pam".into());
        }
        if self.kmeans_n_init == 0 || self.max_iter == 0 || self.clara_samples == 0 {
            return fail("kmeans_n_init, max_iter and clara_samples must be >= 1".into());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return fail("tol must be finite and >= 0".into());
        }
        if self.k_list.is_empty()
            || self.k_list.windows(2).any(|w| w[0] >= w[1])
            || self.k_list[0] == 0
        {
            return fail("k_list must be non-empty, strictly ascending and positive".into());
        }
        if !(self.sensitivity.is_finite() && self.sensitivity >= 0.0) {
            return fail("sensitivity must be finite and >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_minimal_file() {
        let c = PipelineConfig::from_toml_str("synthetic_k = 4\nseed = 7\n").unwrap();
        c.validate().unwrap();
        assert_eq!((c.kmeans_k, c.kmedoids_k), (4, 6));
        assert_eq!(c.k_list, (2..=8).collect::<Vec<_>>());
        assert_eq!(c.window().unwrap(), DateWindow::study());
        let spec = c.synthetic_spec().unwrap();
        assert_eq!((spec.n_points, spec.n_clusters, spec.seed), (2000, 4, 7));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig {
            properties: Some("data/p.csv".into()),
            clara_sample_size: Some(60),
            ..Default::default()
        };
        let back = PipelineConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "",
            "synthetic_k = 4\nproperties = \"x.csv\"",
            "synthetic_k = 4\nwindow_start = 2021-01-01\nwindow_end = 2020-01-01",
            "synthetic_k = 4\nwindow_start = \"2021-01-01\"\nwindow_end = \"2020-01-01\"",
            "synthetic_k = 4\nk_list = [3, 2]",
            "synthetic_k = 4\nkmedoids_algorithm = \"kmeans\"",
            "synthetic_n = 10",
            "synthetic_k = 4\nlsoa = \"l.csv\"",
        ];
        for text in bad {
            let c = PipelineConfig::from_toml_str(text).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{text:?}");
        }
        assert!(matches!(
            PipelineConfig::from_toml_str("no_such_key = 1"),
            Err(Error::Config(_))
        ));
    }
}
