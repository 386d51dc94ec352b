//! Record schema, feature-matrix representation and column metadata.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// First day of the study window (first recorded UK case).
pub const WINDOW_START: (i32, u32, u32) = (2020, 1, 30);
/// Last day of the study window (end of restrictions).
pub const WINDOW_END: (i32, u32, u32) = (2021, 7, 19);
/// Inclusive day count of the study window.
pub const WINDOW_DAYS: u32 = 537;

pub fn window_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(WINDOW_START.0, WINDOW_START.1, WINDOW_START.2).unwrap()
}

pub fn window_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(WINDOW_END.0, WINDOW_END.1, WINDOW_END.2).unwrap()
}

/// Closed calendar interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!(
                "window start {start} is after window end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn study() -> Self {
        Self {
            start: window_start(),
            end: window_end(),
        }
    }

    /// Any overlap with `[first, last]` counts.
    pub fn overlaps(&self, first: NaiveDate, last: NaiveDate) -> bool {
        first <= self.end && last >= self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrbanRural {
    Urban,
    Rural,
}

impl UrbanRural {
    pub fn as_str(self) -> &'static str {
        match self {
            UrbanRural::Urban => "urban",
            UrbanRural::Rural => "rural",
        }
    }
}

impl fmt::Display for UrbanRural {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UrbanRural {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(UrbanRural::Urban),
            "rural" => Ok(UrbanRural::Rural),
            other => Err(Error::invalid(format!(
                "unknown urban_rural value `{other}`"
            ))),
        }
    }
}

/// House of Commons city & town classification, largest settlement first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CityTownClass {
    CoreCityLondon,
    CoreCity,
    OtherCity,
    LargeTown,
    MediumTown,
    SmallTown,
    Village,
}

impl CityTownClass {
    pub const ALL: [CityTownClass; 7] = [
        CityTownClass::CoreCityLondon,
        CityTownClass::CoreCity,
        CityTownClass::OtherCity,
        CityTownClass::LargeTown,
        CityTownClass::MediumTown,
        CityTownClass::SmallTown,
        CityTownClass::Village,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CityTownClass::CoreCityLondon => "core_city_london",
            CityTownClass::CoreCity => "core_city",
            CityTownClass::OtherCity => "other_city",
            CityTownClass::LargeTown => "large_town",
            CityTownClass::MediumTown => "medium_town",
            CityTownClass::SmallTown => "small_town",
            CityTownClass::Village => "village",
        }
    }

    /// Declared level order, as strings.
    pub fn levels() -> Vec<String> {
        Self::ALL.iter().map(|c| c.as_str().to_string()).collect()
    }
}

impl fmt::Display for CityTownClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CityTownClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        CityTownClass::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::invalid(format!("unknown citytown_class `{s}`")))
    }
}

/// One vacation-rental listing.
///
/// Field order is the property CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub property_id: String,
    pub adr: f64,
    pub annual_revenue: f64,
    pub occupancy_rate: f64,
    pub num_bookings: f64,
    pub bedrooms: f64,
    pub bathrooms: f64,
    pub max_guests: f64,
    pub property_response: f64,
    pub host_response: f64,
    pub minimum_stay: f64,
    pub reservation_days: f64,
    pub available_days: f64,
    pub blocked_days: f64,
    pub num_photos: f64,
    pub rating_overall: Option<f64>,
    pub rating_communication: Option<f64>,
    pub rating_accuracy: Option<f64>,
    pub rating_cleanliness: Option<f64>,
    pub rating_checkin: Option<f64>,
    pub rating_location: Option<f64>,
    pub ahah_index: Option<f64>,
    pub imd_index: Option<f64>,
    pub host_num_listings: f64,
    pub cleaning_fee: f64,
    pub property_type: String,
    pub urban_rural: Option<UrbanRural>,
    pub citytown_class: Option<CityTownClass>,
    pub lsoa_code: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub first_active: NaiveDate,
    pub last_active: NaiveDate,
}

/// The 24 numeric clustering variables, in loading-table order.
pub const NUMERIC_FEATURES: [&str; 24] = [
    "adr",
    "annual_revenue",
    "occupancy_rate",
    "num_bookings",
    "bedrooms",
    "bathrooms",
    "max_guests",
    "property_response",
    "minimum_stay",
    "reservation_days",
    "available_days",
    "blocked_days",
    "num_photos",
    "rating_overall",
    "rating_communication",
    "rating_accuracy",
    "rating_cleanliness",
    "rating_checkin",
    "rating_location",
    "ahah_index",
    "imd_index",
    "host_num_listings",
    "host_response",
    "cleaning_fee",
];

pub const RATING_FEATURES: [&str; 6] = [
    "rating_overall",
    "rating_communication",
    "rating_accuracy",
    "rating_cleanliness",
    "rating_checkin",
    "rating_location",
];

impl PropertyRecord {
    /// Value of a numeric feature by name; `None` when absent or unknown.
    pub fn numeric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "adr" => self.adr,
            "annual_revenue" => self.annual_revenue,
            "occupancy_rate" => self.occupancy_rate,
            "num_bookings" => self.num_bookings,
            "bedrooms" => self.bedrooms,
            "bathrooms" => self.bathrooms,
            "max_guests" => self.max_guests,
            "property_response" => self.property_response,
            "host_response" => self.host_response,
            "minimum_stay" => self.minimum_stay,
            "reservation_days" => self.reservation_days,
            "available_days" => self.available_days,
            "blocked_days" => self.blocked_days,
            "num_photos" => self.num_photos,
            "rating_overall" => return self.rating_overall,
            "rating_communication" => return self.rating_communication,
            "rating_accuracy" => return self.rating_accuracy,
            "rating_cleanliness" => return self.rating_cleanliness,
            "rating_checkin" => return self.rating_checkin,
            "rating_location" => return self.rating_location,
            "ahah_index" => return self.ahah_index,
            "imd_index" => return self.imd_index,
            "host_num_listings" => self.host_num_listings,
            "cleaning_fee" => self.cleaning_fee,
            _ => return None,
        })
    }

    pub fn ratings_mut(&mut self) -> [&mut Option<f64>; 6] {
        [
            &mut self.rating_overall,
            &mut self.rating_communication,
            &mut self.rating_accuracy,
            &mut self.rating_cleanliness,
            &mut self.rating_checkin,
            &mut self.rating_location,
        ]
    }
}

/// Lists every invariant the record breaks; empty when valid.
pub fn validate_record(r: &PropertyRecord) -> Vec<String> {
    let mut out = Vec::new();

    let fractions = [
        ("occupancy_rate", r.occupancy_rate),
        ("property_response", r.property_response),
        ("host_response", r.host_response),
    ];
    for (name, v) in fractions {
        if !(0.0..=1.0).contains(&v) {
            out.push(format!("{name} out of [0,1]"));
        }
    }

    let non_negative = [
        ("adr", r.adr),
        ("annual_revenue", r.annual_revenue),
        ("num_bookings", r.num_bookings),
        ("bedrooms", r.bedrooms),
        ("bathrooms", r.bathrooms),
        ("max_guests", r.max_guests),
        ("minimum_stay", r.minimum_stay),
        ("reservation_days", r.reservation_days),
        ("available_days", r.available_days),
        ("blocked_days", r.blocked_days),
        ("num_photos", r.num_photos),
        ("host_num_listings", r.host_num_listings),
        ("cleaning_fee", r.cleaning_fee),
    ];
    for (name, v) in non_negative {
        if v.is_nan() || v < 0.0 {
            out.push(format!("{name} must be >= 0"));
        }
    }

    let integral = [
        ("num_bookings", r.num_bookings),
        ("bedrooms", r.bedrooms),
        ("max_guests", r.max_guests),
        ("num_photos", r.num_photos),
        ("host_num_listings", r.host_num_listings),
    ];
    for (name, v) in integral {
        if v.is_finite() && v.fract() != 0.0 {
            out.push(format!("{name} must be a whole count"));
        }
    }
    if r.bathrooms.is_finite() && (r.bathrooms * 2.0).fract() != 0.0 {
        out.push("bathrooms must be a multiple of 0.5".to_string());
    }

    let days = r.reservation_days + r.available_days + r.blocked_days;
    if days > f64::from(WINDOW_DAYS) {
        out.push(format!("day budget exceeds {WINDOW_DAYS}"));
    }

    let ratings = [
        ("rating_overall", r.rating_overall),
        ("rating_communication", r.rating_communication),
        ("rating_accuracy", r.rating_accuracy),
        ("rating_cleanliness", r.rating_cleanliness),
        ("rating_checkin", r.rating_checkin),
        ("rating_location", r.rating_location),
    ];
    for (name, v) in ratings {
        if let Some(v) = v {
            if !(1.0..=5.0).contains(&v) {
                out.push(format!("{name} out of [1,5]"));
            }
        }
    }

    for (name, v) in [("ahah_index", r.ahah_index), ("imd_index", r.imd_index)] {
        if let Some(v) = v {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            }
        }
    }
    if let Some(lat) = r.latitude {
        if !(-90.0..=90.0).contains(&lat) {
            out.push("latitude out of [-90,90]".to_string());
        }
    }
    if let Some(lon) = r.longitude {
        if !(-180.0..=180.0).contains(&lon) {
            out.push("longitude out of [-180,180]".to_string());
        }
    }
    if r.first_active > r.last_active {
        out.push("first_active after last_active".to_string());
    }
    if r.property_id.trim().is_empty() {
        out.push("property_id is empty".to_string());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Ordinal,
    NominalOnehot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    Log1p,
    Zscore,
    Log1pThenZscore,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub transform: Transform,
    /// Original nominal column for one-hot indicators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_category: Option<String>,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>, transform: Transform) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            transform,
            source_category: None,
        }
    }
}

/// Dense `n x d` feature matrix with per-column metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Matrix<f64>,
    pub columns: Vec<ColumnMeta>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        values: Matrix<f64>,
        columns: Vec<ColumnMeta>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(Error::Schema(format!(
                "{} column descriptors for {} columns",
                columns.len(),
                values.cols()
            )));
        }
        if row_ids.len() != values.rows() {
            return Err(Error::Schema(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                values.rows()
            )));
        }
        Ok(Self {
            values,
            columns,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Keeps only the columns whose metadata matches `pred`, in order.
    pub fn filter_columns(&self, pred: impl Fn(&ColumnMeta) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.columns.len())
            .filter(|&j| pred(&self.columns[j]))
            .collect();
        FeatureMatrix {
            values: self.values.select_cols(&idx),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Checks the post-preprocessing invariants: finite entries, 0/1 indicators.
    pub fn check_invariants(&self) -> Result<()> {
        self.values.ensure_finite()?;
        for (j, c) in self.columns.iter().enumerate() {
            if c.kind == ColumnKind::NominalOnehot {
                for i in 0..self.values.rows() {
                    let v = self.values[(i, j)];
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Schema(format!(
                            "one-hot column `{}` holds {v} at row {i}",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
