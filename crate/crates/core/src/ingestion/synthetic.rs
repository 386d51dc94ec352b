//! Seeded Gaussian-mixture generator with planted clusters.
//!
//! Clusters are planted in a standardized 24-dimensional space (one axis per
//! numeric variable) on the vertices of a randomly rotated regular simplex,
//! then mapped into field units and clipped into valid ranges.

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    window_start, CityTownClass, PropertyRecord, UrbanRural, NUMERIC_FEATURES, WINDOW_DAYS,
};
use crate::error::{Error, Result};

use super::{LsoaAttributes, LsoaTable};

pub const PROPERTY_TYPES: [&str; 4] = ["entire_home", "private_room", "hotel_room", "shared_room"];

const DIM: usize = NUMERIC_FEATURES.len();
const MISSING_RATINGS_P: f64 = 0.02;
const TYPE_FOLLOWS_CLUSTER_P: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_points: usize,
    pub n_clusters: usize,
    /// Distance between any two cluster centers, in within-cluster std units.
    pub separation: f64,
    pub seed: u64,
    pub urban_fraction: f64,
    /// Added to the occupancy rate of every rural record.
    #[serde(default)]
    pub rural_occupancy_uplift: f64,
}

impl SyntheticSpec {
    pub fn new(n_points: usize, n_clusters: usize, separation: f64, seed: u64) -> Self {
        Self {
            n_points,
            n_clusters,
            separation,
            seed,
            urban_fraction: 0.7,
            rural_occupancy_uplift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 1 {
            return Err(Error::invalid("n_clusters must be >= 1"));
        }
        if self.n_clusters > DIM {
            return Err(Error::invalid(format!(
                "at most {DIM} equidistant clusters fit in the feature space"
            )));
        }
        if self.n_points < self.n_clusters {
            return Err(Error::invalid(format!(
                "n_points = {} is smaller than n_clusters = {}",
                self.n_points, self.n_clusters
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.urban_fraction) {
            return Err(Error::invalid("urban_fraction must lie in [0,1]"));
        }
        if !(0.0..=0.3).contains(&self.rural_occupancy_uplift) {
            return Err(Error::invalid("rural_occupancy_uplift must lie in [0,0.3]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Real,
    Fraction,
    Count,
    HalfCount,
    Rating,
}

/// (base, scale, kind) per numeric feature, in `NUMERIC_FEATURES` order.
const FIELD_MAP: [(f64, f64, Kind); DIM] = [
    (110.0, 8.0, Kind::Real),      // adr
    (15_000.0, 900.0, Kind::Real), // annual_revenue
    (0.4, 0.03, Kind::Fraction),   // occupancy_rate
    (40.0, 3.0, Kind::Count),      // num_bookings
    (3.0, 0.3, Kind::Count),       // bedrooms
    (2.0, 0.25, Kind::HalfCount),  // bathrooms
    (6.0, 0.5, Kind::Count),       // max_guests
    (0.85, 0.012, Kind::Fraction), // property_response
    (4.0, 0.35, Kind::Count),      // minimum_stay
    (110.0, 7.0, Kind::Count),     // reservation_days
    (140.0, 8.0, Kind::Count),     // available_days
    (90.0, 6.0, Kind::Count),      // blocked_days
    (25.0, 2.0, Kind::Count),      // num_photos
    (4.3, 0.05, Kind::Rating),     // rating_overall
    (4.4, 0.05, Kind::Rating),     // rating_communication
    (4.35, 0.05, Kind::Rating),    // rating_accuracy
    (4.25, 0.05, Kind::Rating),    // rating_cleanliness
    (4.45, 0.05, Kind::Rating),    // rating_checkin
    (4.4, 0.05, Kind::Rating),     // rating_location
    (20.0, 1.5, Kind::Real),       // ahah_index
    (22.0, 1.8, Kind::Real),       // imd_index
    (8.0, 0.7, Kind::Count),       // host_num_listings
    (0.88, 0.01, Kind::Fraction),  // host_response
    (40.0, 3.0, Kind::Real),       // cleaning_fee
];

fn to_field(z: f64, (base, scale, kind): (f64, f64, Kind)) -> f64 {
    let v = base + scale * z;
    match kind {
        Kind::Real => v.max(0.0),
        Kind::Fraction => v.clamp(0.0, 1.0),
        Kind::Count => v.round().max(0.0),
        Kind::HalfCount => ((v * 2.0).round() / 2.0).max(0.0),
        Kind::Rating => v.clamp(1.0, 5.0),
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Vec<[f64; DIM]> {
    // Gram-Schmidt on a Gaussian matrix
    let mut basis: Vec<[f64; DIM]> = Vec::with_capacity(DIM);
    while basis.len() < DIM {
        let mut v = [0.0; DIM];
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (x, c) in v.iter_mut().zip(b) {
                *x -= dot * c;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Centers on a regular simplex with edge `separation`, centered and rotated.
fn planted_centers(k: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; DIM]> {
    let edge = separation / std::f64::consts::SQRT_2;
    let mut raw = vec![[0.0; DIM]; k];
    for (i, c) in raw.iter_mut().enumerate() {
        c[i] = edge;
    }
    let mean = edge / k as f64;
    for c in raw.iter_mut() {
        for x in c.iter_mut().take(k) {
            *x -= mean;
        }
    }
    let rot = random_rotation(rng);
    raw.iter()
        .map(|c| {
            let mut out = [0.0; DIM];
            for (b, coeff) in rot.iter().zip(c) {
                for (o, x) in out.iter_mut().zip(b) {
                    *o += coeff * x;
                }
            }
            out
        })
        .collect()
}

/// Draws `n_points` valid records and their planted cluster index.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<PropertyRecord>, Vec<usize>)> {
    spec.validate()?;
    let n = spec.n_points;
    let k = spec.n_clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let centers = planted_centers(k, spec.separation, &mut rng);

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);

    let n_urban = (spec.urban_fraction * n as f64).round() as usize;
    let mut urban_flags: Vec<bool> = (0..n).map(|i| i < n_urban).collect();
    urban_flags.shuffle(&mut rng);

    let start = window_start();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let c = &centers[labels[i]];
        let mut f = [0.0; DIM];
        for j in 0..DIM {
            let z = c[j] + rng.sample::<f64, _>(StandardNormal);
            f[j] = to_field(z, FIELD_MAP[j]);
        }

        // reservation + available + blocked must fit in the window
        let days = f[9] + f[10] + f[11];
        let budget = f64::from(WINDOW_DAYS);
        if days > budget {
            let s = budget / days;
            f[9] = (f[9] * s).floor();
            f[10] = (f[10] * s).floor();
            f[11] = (f[11] * s).floor();
        }

        let urban = urban_flags[i];
        if !urban {
            f[2] = (f[2] + spec.rural_occupancy_uplift).min(1.0);
        }

        let reviewed = rng.random::<f64>() >= MISSING_RATINGS_P;
        let rating = |v: f64| if reviewed { Some(v) } else { None };

        let type_idx = if rng.random::<f64>() < TYPE_FOLLOWS_CLUSTER_P {
            labels[i] % PROPERTY_TYPES.len()
        } else {
            rng.random_range(0..PROPERTY_TYPES.len())
        };
        let citytown = if urban {
            CityTownClass::ALL[rng.random_range(0..5)]
        } else {
            CityTownClass::ALL[rng.random_range(5..7)]
        };

        let first_offset = rng.random_range(-180i64..=300);
        let first = start + Duration::days(first_offset);
        let last_from = first.max(start) + Duration::days(rng.random_range(60i64..=400));
        let latitude = rng.random_range(50.0..58.5);
        let longitude = rng.random_range(-5.5..1.7);

        records.push(PropertyRecord {
            property_id: format!("P{i:07}"),
            adr: f[0],
            annual_revenue: f[1],
            occupancy_rate: f[2],
            num_bookings: f[3],
            bedrooms: f[4],
            bathrooms: f[5],
            max_guests: f[6],
            property_response: f[7],
            minimum_stay: f[8],
            reservation_days: f[9],
            available_days: f[10],
            blocked_days: f[11],
            num_photos: f[12],
            rating_overall: rating(f[13]),
            rating_communication: rating(f[14]),
            rating_accuracy: rating(f[15]),
            rating_cleanliness: rating(f[16]),
            rating_checkin: rating(f[17]),
            rating_location: rating(f[18]),
            ahah_index: Some(f[19]),
            imd_index: Some(f[20]),
            host_num_listings: f[21],
            host_response: f[22],
            cleaning_fee: f[23],
            property_type: PROPERTY_TYPES[type_idx].to_string(),
            urban_rural: Some(if urban {
                UrbanRural::Urban
            } else {
                UrbanRural::Rural
            }),
            citytown_class: Some(citytown),
            lsoa_code: format!("SYN{i:07}"),
            latitude: Some(latitude),
            longitude: Some(longitude),
            first_active: first,
            last_active: last_from,
        });
    }
    Ok((records, labels))
}

/// One lookup row per record, carrying the record's own area attributes.
pub fn lookup_from_records(records: &[PropertyRecord]) -> Result<LsoaTable> {
    LsoaTable::new(records.iter().map(|r| LsoaAttributes {
        lsoa_code: r.lsoa_code.clone(),
        imd_index: r.imd_index.unwrap_or(0.0),
        ahah_index: r.ahah_index.unwrap_or(0.0),
        citytown_class: r.citytown_class.unwrap_or(CityTownClass::Village),
        urban_rural: r.urban_rural.unwrap_or(UrbanRural::Rural),
    }))
}
