//! Feature-space construction: mean imputation, skew-aware `log1p`,
//! z-scoring, ordinal ranks and one-hot indicators.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data_model::{
    CityTownClass, ColumnKind, ColumnMeta, FeatureMatrix, PropertyRecord, Transform,
    NUMERIC_FEATURES,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_SKEW_THRESHOLD: f64 = 2.0;

/// Adjusted Fisher-Pearson sample skewness `g1 * sqrt(n(n-1)) / (n-2)`.
pub fn measure_skewness<T: Scalar>(column: &[T]) -> Result<T> {
    let n = column.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "skewness needs at least 3 values, got {n}"
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("skewness input contains non-finite values"));
    }
    let nf = T::of_usize(n);
    let mean = column.iter().copied().sum::<T>() / nf;
    let (mut m2, mut m3) = (T::zero(), T::zero());
    for &x in column {
        let d = x - mean;
        m2 = m2 + d * d;
        m3 = m3 + d * d * d;
    }
    m2 = m2 / nf;
    m3 = m3 / nf;
    let scale = T::one().max(mean.abs());
    if m2.sqrt() <= T::epsilon() * scale {
        return Err(Error::DegenerateColumn("<skewness input>".to_string()));
    }
    let g1 = m3 / m2.powf(T::of(1.5));
    Ok(g1 * (nf * (nf - T::one())).sqrt() / (nf - T::of(2.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NumericColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "levels")]
pub enum CategoricalKind {
    /// Levels in declared order, lowest rank first.
    Ordinal(Vec<String>),
    Nominal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub kind: CategoricalKind,
    pub values: Vec<String>,
}

/// Raw table before encoding: numeric columns may hold gaps, categoricals are strings.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub row_ids: Vec<String>,
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
}

const MISSING_CATEGORY: &str = "unknown";

impl RawFrame {
    /// The 24 numeric variables plus property type, urban/rural and city-town class.
    pub fn from_records(records: &[PropertyRecord]) -> Self {
        let numeric = NUMERIC_FEATURES
            .iter()
            .map(|&name| NumericColumn {
                name: name.to_string(),
                values: records.iter().map(|r| r.numeric(name)).collect(),
            })
            .collect();
        let categorical = vec![
            CategoricalColumn {
                name: "property_type".into(),
                kind: CategoricalKind::Nominal,
                values: records.iter().map(|r| r.property_type.clone()).collect(),
            },
            CategoricalColumn {
                name: "urban_rural".into(),
                kind: CategoricalKind::Nominal,
                values: records
                    .iter()
                    .map(|r| {
                        r.urban_rural
                            .map_or(MISSING_CATEGORY.to_string(), |u| u.to_string())
                    })
                    .collect(),
            },
            CategoricalColumn {
                name: "citytown_class".into(),
                kind: CategoricalKind::Ordinal(CityTownClass::levels()),
                values: records
                    .iter()
                    .map(|r| {
                        r.citytown_class
                            .map_or(MISSING_CATEGORY.to_string(), |c| c.to_string())
                    })
                    .collect(),
            },
        ];
        Self {
            row_ids: records.iter().map(|r| r.property_id.clone()).collect(),
            numeric,
            categorical,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    fn check_lengths(&self) -> Result<()> {
        let n = self.n_rows();
        for c in &self.numeric {
            if c.values.len() != n {
                return Err(Error::Schema(format!(
                    "numeric column `{}` has {} rows, expected {n}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        for c in &self.categorical {
            if c.values.len() != n {
                return Err(Error::Schema(format!(
                    "categorical column `{}` has {} rows, expected {n}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        Ok(())
    }
}

/// Fitted parameters for one numeric column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericPlan {
    pub name: String,
    pub impute_value: f64,
    pub imputed_count: usize,
    pub skewness: f64,
    pub log1p: bool,
    /// Skewed past the threshold but holds negatives, so only z-scored.
    pub log_refused_negative: bool,
    pub mean: f64,
    pub std: f64,
}

impl NumericPlan {
    pub fn transform(&self) -> Transform {
        if self.log1p {
            Transform::Log1pThenZscore
        } else {
            Transform::Zscore
        }
    }

    pub fn forward(&self, raw: Option<f64>) -> f64 {
        let v = raw.unwrap_or(self.impute_value);
        let v = if self.log1p { v.ln_1p() } else { v };
        (v - self.mean) / self.std
    }

    /// Maps a standardized value back to original units.
    pub fn inverse(&self, z: f64) -> f64 {
        let v = z * self.std + self.mean;
        if self.log1p {
            v.exp_m1()
        } else {
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdinalMap {
    pub column: String,
    /// Observed levels in declared order; level `i` encodes to `i / (m - 1)`.
    pub levels: Vec<String>,
}

impl OrdinalMap {
    pub fn encode(&self, category: &str) -> Result<f64> {
        let rank = self
            .levels
            .iter()
            .position(|l| l == category)
            .ok_or_else(|| Error::UnseenCategory {
                column: self.column.clone(),
                category: category.to_string(),
            })?;
        Ok(rank as f64 / (self.levels.len() - 1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotMap {
    pub column: String,
    /// Lexicographically sorted; one indicator column per entry.
    pub categories: Vec<String>,
}

impl OneHotMap {
    pub fn column_names(&self) -> Vec<String> {
        self.categories
            .iter()
            .map(|c| format!("{}={c}", self.column))
            .collect()
    }
}

/// Everything needed to re-apply the preprocessing to new rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub skew_threshold: f64,
    pub numeric: Vec<NumericPlan>,
    pub log_columns: Vec<String>,
    pub ordinal_maps: Vec<OrdinalMap>,
    pub onehot_maps: Vec<OneHotMap>,
    pub dropped_constant: Vec<String>,
    pub imputed_total: usize,
}

impl PreprocessPlan {
    pub fn numeric_plan(&self, name: &str) -> Option<&NumericPlan> {
        self.numeric.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Fits the preprocessing plan on a raw frame.
pub fn fit_plan(frame: &RawFrame, skew_threshold: f64) -> Result<PreprocessPlan> {
    frame.check_lengths()?;
    if frame.n_rows() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 rows to fit a plan, got {}",
            frame.n_rows()
        )));
    }

    let mut numeric = Vec::new();
    let mut dropped = Vec::new();
    for col in &frame.numeric {
        let present: Vec<f64> = col.values.iter().flatten().copied().collect();
        if present.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "column `{}` holds non-finite values",
                col.name
            )));
        }
        if present.is_empty() {
            dropped.push(col.name.clone());
            continue;
        }
        let impute_value = present.iter().sum::<f64>() / present.len() as f64;
        let imputed_count = col.values.len() - present.len();
        let filled: Vec<f64> = col
            .values
            .iter()
            .map(|v| v.unwrap_or(impute_value))
            .collect();
        if is_constant(&filled) {
            dropped.push(col.name.clone());
            continue;
        }

        let skewness =
            measure_skewness(&filled).map_err(|_| Error::DegenerateColumn(col.name.clone()))?;
        let skewed = skewness.abs() > skew_threshold;
        let has_negative = filled.iter().any(|&v| v < 0.0);
        let log1p = skewed && !has_negative;
        let transformed: Vec<f64> = if log1p {
            filled.iter().map(|v| v.ln_1p()).collect()
        } else {
            filled
        };
        let (mean, std) = mean_std(&transformed);
        if std.is_nan() || std <= 0.0 {
            return Err(Error::DegenerateColumn(col.name.clone()));
        }
        numeric.push(NumericPlan {
            name: col.name.clone(),
            impute_value,
            imputed_count,
            skewness,
            log1p,
            log_refused_negative: skewed && has_negative,
            mean,
            std,
        });
    }

    let mut ordinal_maps = Vec::new();
    let mut onehot_maps = Vec::new();
    for col in &frame.categorical {
        let observed: BTreeSet<&str> = col.values.iter().map(String::as_str).collect();
        if observed.len() < 2 {
            dropped.push(col.name.clone());
            continue;
        }
        match &col.kind {
            CategoricalKind::Ordinal(declared) => {
                if let Some(extra) = observed.iter().find(|c| !declared.iter().any(|d| d == *c)) {
                    return Err(Error::UnseenCategory {
                        column: col.name.clone(),
                        category: extra.to_string(),
                    });
                }
                ordinal_maps.push(OrdinalMap {
                    column: col.name.clone(),
                    levels: declared
                        .iter()
                        .filter(|d| observed.contains(d.as_str()))
                        .cloned()
                        .collect(),
                });
            }
            CategoricalKind::Nominal => onehot_maps.push(OneHotMap {
                column: col.name.clone(),
                categories: observed.iter().map(|s| s.to_string()).collect(),
            }),
        }
    }

    if numeric.is_empty() && ordinal_maps.is_empty() && onehot_maps.is_empty() {
        return Err(Error::AllColumnsConstant);
    }

    Ok(PreprocessPlan {
        skew_threshold,
        log_columns: numeric
            .iter()
            .filter(|p| p.log1p)
            .map(|p| p.name.clone())
            .collect(),
        imputed_total: numeric.iter().map(|p| p.imputed_count).sum(),
        numeric,
        ordinal_maps,
        onehot_maps,
        dropped_constant: dropped,
    })
}

fn find_numeric<'a>(frame: &'a RawFrame, name: &str) -> Result<&'a NumericColumn> {
    frame
        .numeric
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Schema(format!("numeric column `{name}` missing")))
}

fn find_categorical<'a>(frame: &'a RawFrame, name: &str) -> Result<&'a CategoricalColumn> {
    frame
        .categorical
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Schema(format!("categorical column `{name}` missing")))
}

/// Applies a fitted plan. Output columns: z-scored numerics, ordinal ranks,
/// then one-hot indicators.
pub fn apply_plan(frame: &RawFrame, plan: &PreprocessPlan) -> Result<FeatureMatrix> {
    frame.check_lengths()?;
    let n = frame.n_rows();
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();

    for p in &plan.numeric {
        let src = find_numeric(frame, &p.name)?;
        cols.push(src.values.iter().map(|&v| p.forward(v)).collect());
        columns.push(ColumnMeta::numeric(&p.name, p.transform()));
    }
    for m in &plan.ordinal_maps {
        let src = find_categorical(frame, &m.column)?;
        cols.push(
            src.values
                .iter()
                .map(|v| m.encode(v))
                .collect::<Result<Vec<f64>>>()?,
        );
        columns.push(ColumnMeta {
            name: m.column.clone(),
            kind: ColumnKind::Ordinal,
            transform: Transform::None,
            source_category: None,
        });
    }
    for m in &plan.onehot_maps {
        let src = find_categorical(frame, &m.column)?;
        if let Some(v) = src.values.iter().find(|v| !m.categories.contains(v)) {
            return Err(Error::UnseenCategory {
                column: m.column.clone(),
                category: v.clone(),
            });
        }
        for (cat, name) in m.categories.iter().zip(m.column_names()) {
            cols.push(
                src.values
                    .iter()
                    .map(|v| if v == cat { 1.0 } else { 0.0 })
                    .collect(),
            );
            columns.push(ColumnMeta {
                name,
                kind: ColumnKind::NominalOnehot,
                transform: Transform::None,
                source_category: Some(m.column.clone()),
            });
        }
    }

    let d = cols.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in &cols {
            data.push(c[i]);
        }
    }
    let fm = FeatureMatrix::new(Matrix::new(n, d, data)?, columns, frame.row_ids.clone())?;
    fm.check_invariants()?;
    Ok(fm)
}

/// Sets of exactly equal numeric columns, first name kept.
pub fn duplicate_numeric_columns(frame: &RawFrame) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (i, a) in frame.numeric.iter().enumerate() {
        if out.iter().any(|(_, dup): &(String, String)| dup == &a.name) {
            continue;
        }
        for b in &frame.numeric[i + 1..] {
            if a.values == b.values {
                out.push((a.name.clone(), b.name.clone()));
            }
        }
    }
    out
}
