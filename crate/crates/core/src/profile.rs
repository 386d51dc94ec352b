//! Cluster profiles in original units, urban/rural splits, monthly series and
//! labelled coordinates.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data_model::{DateWindow, FeatureMatrix, PropertyRecord, UrbanRural, NUMERIC_FEATURES};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    /// Records with a value for this feature.
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub std: Option<f64>,
    /// `(cluster mean - overall mean) / overall std`.
    pub standardized_mean: f64,
    /// Standardized cluster mean in model space mapped back through the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub urban_share: f64,
    pub features: Vec<FeatureSummary>,
    /// Feature names by descending `|standardized_mean|`, ties by name.
    pub top_features: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub n: usize,
    pub profiles: Vec<ClusterProfile>,
    pub warnings: Vec<String>,
}

fn check_lengths(records: &[PropertyRecord], labels: &[usize]) -> Result<()> {
    if records.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

/// Per-cluster summaries of the 24 numeric features, skipping absent values.
///
/// Clusters are `0..=max(label)`; any that turn out empty are left out and
/// reported in `warnings`.
pub fn profile_clusters(records: &[PropertyRecord], labels: &[usize]) -> Result<ProfileReport> {
    check_lengths(records, labels)?;
    let Some(&max_label) = labels.iter().max() else {
        return Ok(ProfileReport::default());
    };
    let k = max_label + 1;

    let overall: Vec<(Option<f64>, Option<f64>)> = NUMERIC_FEATURES
        .iter()
        .map(|f| {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.numeric(f)).collect();
            mean_std(&vals)
        })
        .collect();

    let mut members: Vec<Vec<&PropertyRecord>> = vec![Vec::new(); k];
    for (r, &l) in records.iter().zip(labels) {
        members[l].push(r);
    }

    let mut report = ProfileReport {
        n: records.len(),
        ..Default::default()
    };
    for (cluster, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            report
                .warnings
                .push(format!("cluster {cluster} is empty and was skipped"));
            continue;
        }
        let features: Vec<FeatureSummary> = NUMERIC_FEATURES
            .iter()
            .zip(&overall)
            .map(|(f, &(g_mean, g_std))| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.numeric(f)).collect();
                let (mean, std) = mean_std(&vals);
                let standardized_mean = match (mean, g_mean, g_std) {
                    (Some(m), Some(gm), Some(gs)) if gs > 0.0 => (m - gm) / gs,
                    _ => 0.0,
                };
                FeatureSummary {
                    name: f.to_string(),
                    count: vals.len(),
                    mean,
                    median: median(&vals),
                    std,
                    standardized_mean,
                    plan_mean: None,
                }
            })
            .collect();

        let mut ranked: Vec<&FeatureSummary> = features.iter().collect();
        ranked.sort_by(|a, b| {
            b.standardized_mean
                .abs()
                .total_cmp(&a.standardized_mean.abs())
                .then_with(|| a.name.cmp(&b.name))
        });
        let urban = rows
            .iter()
            .filter(|r| r.urban_rural == Some(UrbanRural::Urban))
            .count();
        report.profiles.push(ClusterProfile {
            cluster,
            size: rows.len(),
            urban_share: urban as f64 / rows.len() as f64,
            top_features: ranked.iter().map(|f| f.name.clone()).collect(),
            features,
        });
    }
    Ok(report)
}

/// Per-cluster mean of each numeric model column mapped back to original units
/// through the plan's inverse (un-zscore, then expm1 for logged columns).
///
/// Keys are column names. For logged columns the result is a geometric-style
/// mean, so it sits below the arithmetic mean by the Jensen gap.
pub fn plan_cluster_means(
    features: &FeatureMatrix,
    plan: &PreprocessPlan,
    labels: &[usize],
) -> Result<Vec<BTreeMap<String, f64>>> {
    if features.n_rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.n_rows(),
            right: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut out = vec![BTreeMap::new(); k];
    for np in &plan.numeric {
        let Some(j) = features.column_index(&np.name) else {
            continue;
        };
        let mut sums = vec![0.0; k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += features.values[(i, j)];
        }
        for c in 0..k {
            if sizes[c] > 0 {
                out[c].insert(np.name.clone(), np.inverse(sums[c] / sizes[c] as f64));
            }
        }
    }
    Ok(out)
}

/// Fills `plan_mean` on every feature summary from [`plan_cluster_means`].
pub fn attach_plan_means(report: &mut ProfileReport, means: &[BTreeMap<String, f64>]) {
    for p in &mut report.profiles {
        if let Some(m) = means.get(p.cluster) {
            for f in &mut p.features {
                f.plan_mean = m.get(&f.name).copied();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrbanRuralCounts {
    pub cluster: usize,
    pub urban: usize,
    pub rural: usize,
    /// Records without an urban/rural class.
    pub unknown: usize,
}

pub fn urban_rural_distribution(
    records: &[PropertyRecord],
    labels: &[usize],
) -> Result<Vec<UrbanRuralCounts>> {
    check_lengths(records, labels)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut rows: Vec<UrbanRuralCounts> = (0..k)
        .map(|cluster| UrbanRuralCounts {
            cluster,
            urban: 0,
            rural: 0,
            unknown: 0,
        })
        .collect();
    for (r, &l) in records.iter().zip(labels) {
        match r.urban_rural {
            Some(UrbanRural::Urban) => rows[l].urban += 1,
            Some(UrbanRural::Rural) => rows[l].rural += 1,
            None => rows[l].unknown += 1,
        }
    }
    Ok(rows)
}

pub fn write_urban_rural_csv<W: Write>(w: W, rows: &[UrbanRuralCounts]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["cluster", "urban", "rural", "unknown"])?;
    }
    out.flush()?;
    Ok(())
}

/// One month of the descriptive series; `None` where no record was active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub month: String,
    pub urban: Option<f64>,
    pub rural: Option<f64>,
    pub urban_n: usize,
    pub rural_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveSeries {
    pub window: DateWindow,
    /// Mean monthly revenue (`annual_revenue / 12`) of active records.
    pub revenue: Vec<SeriesRow>,
    pub occupancy: Vec<SeriesRow>,
}

fn month_start(d: NaiveDate) -> NaiveDate {
    d.with_day(1).expect("day 1 exists")
}

fn next_month(d: NaiveDate) -> NaiveDate {
    let (y, m) = if d.month() == 12 {
        (d.year() + 1, 1)
    } else {
        (d.year(), d.month() + 1)
    };
    NaiveDate::from_ymd_opt(y, m, 1).expect("valid month")
}

/// Monthly means of revenue and occupancy over the window, split urban/rural.
///
/// A record counts towards every month its activity span overlaps within the
/// window. Records without an urban/rural class are left out. Empty input
/// gives empty series.
pub fn descriptive_series(records: &[PropertyRecord], window: DateWindow) -> DescriptiveSeries {
    let mut revenue = Vec::new();
    let mut occupancy = Vec::new();
    if !records.is_empty() {
        let mut month = month_start(window.start);
        while month <= window.end {
            let last_day = next_month(month).pred_opt().expect("valid date");
            let lo = month.max(window.start);
            let hi = last_day.min(window.end);
            // [revenue sum, occupancy sum, count] for urban then rural
            let mut acc = [[0.0f64; 3]; 2];
            for r in records {
                let side = match r.urban_rural {
                    Some(UrbanRural::Urban) => 0,
                    Some(UrbanRural::Rural) => 1,
                    None => continue,
                };
                if r.first_active <= hi && r.last_active >= lo {
                    acc[side][0] += r.annual_revenue / 12.0;
                    acc[side][1] += r.occupancy_rate;
                    acc[side][2] += 1.0;
                }
            }
            let mean = |side: usize, field: usize| {
                (acc[side][2] > 0.0).then(|| acc[side][field] / acc[side][2])
            };
            let label = format!("{:04}-{:02}", month.year(), month.month());
            for (field, series) in [(0, &mut revenue), (1, &mut occupancy)] {
                series.push(SeriesRow {
                    month: label.clone(),
                    urban: mean(0, field),
                    rural: mean(1, field),
                    urban_n: acc[0][2] as usize,
                    rural_n: acc[1][2] as usize,
                });
            }
            month = next_month(month);
        }
    }
    DescriptiveSeries {
        window,
        revenue,
        occupancy,
    }
}

/// Writes one series with a `#` comment line carrying the window dates.
/// Absent means are empty cells.
pub fn write_series_csv<W: Write>(mut w: W, window: DateWindow, rows: &[SeriesRow]) -> Result<()> {
    writeln!(
        w,
        "# window_start={} window_end={}",
        window.start, window.end
    )?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["month", "urban", "rural", "urban_n", "rural_n"])?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_series_csv<R: std::io::Read>(r: R) -> Result<Vec<SeriesRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub property_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub cluster: usize,
}

/// Writes `property_id,latitude,longitude,cluster`; returns how many rows
/// were skipped for lacking coordinates.
pub fn export_cluster_points<W: Write>(
    w: W,
    records: &[PropertyRecord],
    labels: &[usize],
) -> Result<usize> {
    check_lengths(records, labels)?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["property_id", "latitude", "longitude", "cluster"])?;
    let mut skipped = 0;
    for (r, &cluster) in records.iter().zip(labels) {
        match (r.latitude, r.longitude) {
            (Some(latitude), Some(longitude)) => out.serialize(ClusterPoint {
                property_id: r.property_id.clone(),
                latitude,
                longitude,
                cluster,
            })?,
            _ => skipped += 1,
        }
    }
    out.flush()?;
    Ok(skipped)
}

/// `property_id,cluster`.
pub fn write_labels_csv<W: Write>(w: W, ids: &[String], labels: &[usize]) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: ids.len(),
            right: labels.len(),
        });
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["property_id", "cluster"])?;
    for (id, l) in ids.iter().zip(labels) {
        out.write_record([id.as_str(), &l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: std::io::Read>(r: R) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::Reader::from_reader(r);
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::fixtures::record;
    use crate::ingestion::{generate_synthetic, SyntheticSpec};
    use crate::preprocess::{apply_plan, fit_plan, RawFrame};

    fn records(n: usize) -> Vec<PropertyRecord> {
        (0..n)
            .map(|i| {
                let mut r = record(&format!("p{i}"));
                r.adr = 50.0 + i as f64;
                r.annual_revenue = 1000.0 * (i + 1) as f64;
                r
            })
            .collect()
    }

    #[test]
    fn single_cluster_matches_global_means() {
        let rs = records(7);
        let rep = profile_clusters(&rs, &[0; 7]).unwrap();
        assert_eq!(rep.profiles.len(), 1);
        let adr = rep.profiles[0]
            .features
            .iter()
            .find(|f| f.name == "adr")
            .unwrap();
        let global = rs.iter().map(|r| r.adr).sum::<f64>() / 7.0;
        assert_eq!(adr.mean, Some(global));
        assert_eq!(adr.median, Some(53.0));
        assert!(rep.profiles[0]
            .features
            .iter()
            .all(|f| f.standardized_mean.abs() < 1e-12));
    }

    #[test]
    fn planted_low_ratings_rank_first() {
        let mut rs = records(40);
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 10)).collect();
        for (i, r) in rs.iter_mut().enumerate() {
            let base = if i < 10 { 2.0 } else { 4.5 };
            let jitter = (i % 3) as f64 * 0.1;
            r.rating_overall = Some(base + jitter);
        }
        // direct computation over the columns that vary in the fixture
        let direct = |get: &dyn Fn(&PropertyRecord) -> f64| {
            let all: Vec<f64> = rs.iter().map(get).collect();
            let n = all.len() as f64;
            let gm = all.iter().sum::<f64>() / n;
            let gs = (all.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let cm = all[..10].iter().sum::<f64>() / 10.0;
            ((cm - gm) / gs).abs()
        };
        let rating = direct(&|r| r.rating_overall.unwrap());
        assert!(rating > direct(&|r| r.adr));
        assert!(rating > direct(&|r| r.annual_revenue));

        let rep = profile_clusters(&rs, &labels).unwrap();
        let low = &rep.profiles[0];
        assert_eq!(low.top_features[0], "rating_overall");
        assert!(
            low.features
                .iter()
                .find(|f| f.name == "rating_overall")
                .unwrap()
                .standardized_mean
                < 0.0
        );
    }

    #[test]
    fn urban_share_follows_split() {
        let mut rs = records(6);
        for (i, r) in rs.iter_mut().enumerate() {
            r.urban_rural = Some(if i < 3 {
                UrbanRural::Urban
            } else {
                UrbanRural::Rural
            });
        }
        let labels = [0, 0, 0, 1, 1, 1];
        let rep = profile_clusters(&rs, &labels).unwrap();
        assert_eq!(rep.profiles[0].urban_share, 1.0);
        assert_eq!(rep.profiles[1].urban_share, 0.0);
        assert_eq!(rep.profiles.iter().map(|p| p.size).sum::<usize>(), 6);
    }

    #[test]
    fn empty_cluster_is_skipped_with_warning() {
        let rep = profile_clusters(&records(3), &[0, 2, 2]).unwrap();
        assert_eq!(rep.profiles.len(), 2);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn urban_rural_counts() {
        let rs = records(5);
        let rows = urban_rural_distribution(&rs, &[0, 1, 1, 0, 1]).unwrap();
        assert!(rows.iter().all(|r| r.rural == 0));
        assert_eq!(rows[0].urban + rows[0].rural + rows[0].unknown, 2);
        assert_eq!(rows[1].urban + rows[1].rural + rows[1].unknown, 3);
    }

    #[test]
    fn generator_urban_share_is_exact() {
        let mut spec = SyntheticSpec::new(500, 3, 6.0, 8);
        spec.urban_fraction = 0.7;
        let (rs, _) = generate_synthetic(&spec).unwrap();
        let rows = urban_rural_distribution(&rs, &vec![0; rs.len()]).unwrap();
        assert_eq!((rows[0].urban, rows[0].rural), (350, 150));
    }

    #[test]
    fn single_record_series() {
        let r = record("a");
        let s = descriptive_series(std::slice::from_ref(&r), DateWindow::study());
        assert_eq!(s.revenue.len(), 19);
        assert_eq!(s.revenue[0].month, "2020-01");
        assert_eq!(s.revenue.last().unwrap().month, "2021-07");
        for row in &s.revenue {
            // fixture is urban and active 2019-06-01..2021-03-01
            if row.month.as_str() <= "2021-03" {
                assert_eq!(row.urban, Some(r.annual_revenue / 12.0));
            } else {
                assert_eq!(row.urban, None);
            }
            assert_eq!(row.rural, None);
        }
        assert!(s
            .occupancy
            .iter()
            .flat_map(|o| o.urban)
            .all(|v| v == r.occupancy_rate));
    }

    #[test]
    fn empty_series() {
        let s = descriptive_series(&[], DateWindow::study());
        assert!(s.revenue.is_empty() && s.occupancy.is_empty());
    }

    #[test]
    fn rural_uplift_passes_through() {
        let mut spec = SyntheticSpec::new(4000, 4, 4.0, 21);
        spec.urban_fraction = 0.5;
        spec.rural_occupancy_uplift = 0.2;
        let (rs, _) = generate_synthetic(&spec).unwrap();
        let s = descriptive_series(&rs, DateWindow::study());
        for row in &s.occupancy {
            if row.urban_n >= 300 && row.rural_n >= 300 {
                let gap = row.rural.unwrap() - row.urban.unwrap();
                assert!((gap - 0.2).abs() < 0.05, "{} gap {gap}", row.month);
            }
        }
    }

    #[test]
    fn series_csv_round_trips() {
        let mut rs = records(3);
        rs[1].urban_rural = Some(UrbanRural::Rural);
        let s = descriptive_series(&rs, DateWindow::study());
        let mut buf = Vec::new();
        write_series_csv(&mut buf, s.window, &s.revenue).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# window_start=2020-01-30 window_end=2021-07-19\n"));
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), s.revenue);
    }

    #[test]
    fn points_skip_missing_coordinates() {
        let mut rs = records(5);
        rs[1].latitude = None;
        rs[3].longitude = None;
        let labels = [0, 1, 2, 1, 0];
        let mut buf = Vec::new();
        assert_eq!(export_cluster_points(&mut buf, &rs, &labels).unwrap(), 2);
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let pts: Vec<ClusterPoint> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(pts.len(), 3);

        let mut lb = Vec::new();
        let ids: Vec<String> = rs.iter().map(|r| r.property_id.clone()).collect();
        write_labels_csv(&mut lb, &ids, &labels).unwrap();
        let joined: BTreeMap<String, usize> = read_labels_csv(lb.as_slice())
            .unwrap()
            .into_iter()
            .collect();
        assert!(pts.iter().all(|p| joined[&p.property_id] == p.cluster));
    }

    #[test]
    fn urban_rural_csv_round_trips() {
        let rows = urban_rural_distribution(&records(4), &[0, 1, 0, 1]).unwrap();
        let mut buf = Vec::new();
        write_urban_rural_csv(&mut buf, &rows).unwrap();
        let back: Vec<UrbanRuralCounts> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(back, rows);
    }

    #[test]
    fn inverse_transform_recovers_cluster_means() {
        // untransformed column: adr; logged column: annual_revenue with a long tail
        let mut rs = records(60);
        let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
        for (i, r) in rs.iter_mut().enumerate() {
            r.adr = 80.0 + (i % 7) as f64 * 3.0 + if i % 2 == 0 { 40.0 } else { 0.0 };
            r.annual_revenue = if i < 3 {
                5.0e6
            } else {
                1.0e4 + (i % 5) as f64 * 100.0
            };
        }
        let frame = RawFrame::from_records(&rs);
        let plan = fit_plan(&frame, 2.0).unwrap();
        assert!(plan.log_columns.contains(&"annual_revenue".to_string()));
        assert!(!plan.log_columns.contains(&"adr".to_string()));
        let fm = apply_plan(&frame, &plan).unwrap();
        let back = plan_cluster_means(&fm, &plan, &labels).unwrap();
        let mut rep = profile_clusters(&rs, &labels).unwrap();
        attach_plan_means(&mut rep, &back);

        for p in &rep.profiles {
            let adr = p.features.iter().find(|f| f.name == "adr").unwrap();
            let (m, b) = (adr.mean.unwrap(), adr.plan_mean.unwrap());
            assert!(((m - b) / m).abs() < 1e-6);
        }
        // Jensen gap check on the tail-free rows of cluster 1
        let tail_free: Vec<usize> = (3..60).collect();
        let sub: Vec<PropertyRecord> = tail_free.iter().map(|&i| rs[i].clone()).collect();
        let sub_labels: Vec<usize> = tail_free.iter().map(|&i| labels[i]).collect();
        let sub_fm = apply_plan(&RawFrame::from_records(&sub), &plan).unwrap();
        let sub_back = plan_cluster_means(&sub_fm, &plan, &sub_labels).unwrap();
        let sub_rep = profile_clusters(&sub, &sub_labels).unwrap();
        for p in &sub_rep.profiles {
            let m = p
                .features
                .iter()
                .find(|f| f.name == "annual_revenue")
                .unwrap()
                .mean
                .unwrap();
            let b = sub_back[p.cluster]["annual_revenue"];
            assert!(((m - b) / m).abs() < 0.05, "{m} vs {b}");
        }
    }
}
