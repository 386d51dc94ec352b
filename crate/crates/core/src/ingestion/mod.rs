//! Property CSV ingestion, study-window filtering and LSOA enrichment.

mod synthetic;

pub use synthetic::{generate_synthetic, lookup_from_records, SyntheticSpec, PROPERTY_TYPES};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{validate_record, CityTownClass, DateWindow, PropertyRecord, UrbanRural};
use crate::error::{Error, Result};

/// Property CSV header, in column order.
pub const PROPERTY_COLUMNS: [&str; 33] = [
    "property_id",
    "adr",
    "annual_revenue",
    "occupancy_rate",
    "num_bookings",
    "bedrooms",
    "bathrooms",
    "max_guests",
    "property_response",
    "host_response",
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
    "cleaning_fee",
    "property_type",
    "urban_rural",
    "citytown_class",
    "lsoa_code",
    "latitude",
    "longitude",
    "first_active",
    "last_active",
];

/// Area-level attributes keyed by LSOA code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsoaAttributes {
    pub lsoa_code: String,
    pub imd_index: f64,
    pub ahah_index: f64,
    pub citytown_class: CityTownClass,
    pub urban_rural: UrbanRural,
}

/// Lookup table with unique LSOA codes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LsoaTable {
    rows: BTreeMap<String, LsoaAttributes>,
}

impl LsoaTable {
    pub fn new(rows: impl IntoIterator<Item = LsoaAttributes>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for row in rows {
            let code = row.lsoa_code.clone();
            if map.insert(code.clone(), row).is_some() {
                return Err(Error::Ingest(format!(
                    "duplicate lsoa_code `{code}` in lookup"
                )));
            }
        }
        Ok(Self { rows: map })
    }

    pub fn get(&self, code: &str) -> Option<&LsoaAttributes> {
        self.rows.get(code)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LsoaAttributes> {
        self.rows.values()
    }
}

/// Row tallies of one ingest; `rows_read` equals kept plus every drop.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped_window: usize,
    pub rows_dropped_join_miss: usize,
    pub rows_dropped_invalid: usize,
}

impl IngestReport {
    pub fn is_conserved(&self) -> bool {
        self.rows_read
            == self.rows_kept
                + self.rows_dropped_window
                + self.rows_dropped_join_miss
                + self.rows_dropped_invalid
    }
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a property CSV, keeping valid rows active inside `window`.
///
/// Malformed and invalid rows are counted, not fatal. A missing file or a
/// header lacking required columns is fatal.
pub fn load_properties(
    path: &Path,
    window: DateWindow,
) -> Result<(Vec<PropertyRecord>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(open(path)?);
    let headers = reader
        .byte_headers()
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?
        .clone();
    let present: HashSet<&[u8]> = headers.iter().collect();
    let missing: Vec<&str> = PROPERTY_COLUMNS
        .iter()
        .copied()
        .filter(|c| !present.contains(c.as_bytes()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Ingest(format!(
            "{}: missing columns {}",
            path.display(),
            missing.join(", ")
        )));
    }

    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    let mut row = csv::ByteRecord::new();
    loop {
        match reader.read_byte_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.rows_dropped_invalid += 1;
                continue;
            }
        }
        report.rows_read += 1;
        let record: PropertyRecord = match row.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(_) => {
                report.rows_dropped_invalid += 1;
                continue;
            }
        };
        if !validate_record(&record).is_empty() {
            report.rows_dropped_invalid += 1;
        } else if !window.overlaps(record.first_active, record.last_active) {
            report.rows_dropped_window += 1;
        } else {
            kept.push(record);
        }
    }
    report.rows_kept = kept.len();
    Ok((kept, report))
}

/// Fills area attributes from the lookup, dropping records whose code misses.
pub fn join_lsoa(records: Vec<PropertyRecord>, lookup: &LsoaTable) -> (Vec<PropertyRecord>, usize) {
    let mut misses = 0;
    let mut out = Vec::with_capacity(records.len());
    for mut r in records {
        match lookup.get(&r.lsoa_code) {
            Some(a) => {
                r.imd_index = Some(a.imd_index);
                r.ahah_index = Some(a.ahah_index);
                r.citytown_class = Some(a.citytown_class);
                r.urban_rural = Some(a.urban_rural);
                out.push(r);
            }
            None => misses += 1,
        }
    }
    (out, misses)
}

/// Load, then join, with a single conserved report.
pub fn ingest(
    path: &Path,
    window: DateWindow,
    lookup: Option<&LsoaTable>,
) -> Result<(Vec<PropertyRecord>, IngestReport)> {
    let (records, mut report) = load_properties(path, window)?;
    let records = match lookup {
        Some(table) => {
            let (joined, misses) = join_lsoa(records, table);
            report.rows_dropped_join_miss = misses;
            report.rows_kept = joined.len();
            joined
        }
        None => records,
    };
    Ok((records, report))
}

pub fn write_properties(path: &Path, records: &[PropertyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if records.is_empty() {
        w.write_record(PROPERTY_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lsoa_table(path: &Path) -> Result<LsoaTable> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<LsoaAttributes>, _>>()
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    LsoaTable::new(rows)
}

pub fn write_lsoa_table(path: &Path, table: &LsoaTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record([
        "lsoa_code",
        "imd_index",
        "ahah_index",
        "citytown_class",
        "urban_rural",
    ])?;
    for row in table.iter() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    property_id: String,
    true_label: usize,
}

pub fn write_truth(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(["property_id", "true_label"])?;
    for (id, &l) in ids.iter().zip(labels) {
        w.serialize(TruthRow {
            property_id: id.clone(),
            true_label: l,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut out = BTreeMap::new();
    for row in reader.deserialize() {
        let row: TruthRow = row?;
        out.insert(row.property_id, row.true_label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::fixtures::record;
    use chrono::NaiveDate;

    fn lookup_for(codes: &[&str]) -> LsoaTable {
        LsoaTable::new(codes.iter().map(|c| LsoaAttributes {
            lsoa_code: c.to_string(),
            imd_index: 12.5,
            ahah_index: 30.0,
            citytown_class: CityTownClass::Village,
            urban_rural: UrbanRural::Rural,
        }))
        .unwrap()
    }

    #[test]
    fn window_exclusion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let a = record("a");
        let mut b = record("b");
        b.first_active = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        b.last_active = NaiveDate::from_ymd_opt(2019, 12, 31).unwrap();
        let c = record("c");
        write_properties(&path, &[a, b, c]).unwrap();
        let (recs, rep) = load_properties(&path, DateWindow::study()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(rep.rows_read, 3);
        assert_eq!(rep.rows_dropped_window, 1);
        assert!(rep.is_conserved());
    }

    #[test]
    fn header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_properties(&path, &[]).unwrap();
        let (recs, rep) = load_properties(&path, DateWindow::study()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(rep, IngestReport::default());
    }

    #[test]
    fn invalid_and_malformed_rows_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut bad = record("bad");
        bad.occupancy_rate = 1.5;
        write_properties(&path, &[record("ok"), bad]).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("garbage,row\n");
        text.push_str(&"x,".repeat(32));
        text.push_str("y\n");
        std::fs::write(&path, text).unwrap();
        let (recs, rep) = load_properties(&path, DateWindow::study()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(rep.rows_read, 4);
        assert_eq!(rep.rows_dropped_invalid, 3);
        assert!(rep.is_conserved());
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = load_properties(Path::new("/nonexistent/p.csv"), DateWindow::study());
        assert!(err.is_err());
    }

    #[test]
    fn missing_header_column_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "property_id,adr\np1,10\n").unwrap();
        assert!(matches!(
            load_properties(&path, DateWindow::study()),
            Err(Error::Ingest(_))
        ));
    }

    #[test]
    fn join_fills_and_counts_misses() {
        let mut a = record("a");
        a.lsoa_code = "L1".into();
        a.imd_index = None;
        let mut b = record("b");
        b.lsoa_code = "L2".into();

        let (both, miss) = join_lsoa(vec![a.clone(), b.clone()], &lookup_for(&["L1", "L2"]));
        assert_eq!((both.len(), miss), (2, 0));
        assert_eq!(both[0].imd_index, Some(12.5));
        assert_eq!(both[0].urban_rural, Some(UrbanRural::Rural));

        let (one, miss) = join_lsoa(vec![a.clone(), b.clone()], &lookup_for(&["L1"]));
        assert_eq!((one.len(), miss), (1, 1));

        let (none, miss) = join_lsoa(vec![a, b], &LsoaTable::default());
        assert_eq!((none.len(), miss), (0, 2));
    }

    #[test]
    fn join_is_idempotent() {
        let table = lookup_for(&["E01000001"]);
        let (once, _) = join_lsoa(vec![record("a"), record("b")], &table);
        let (twice, _) = join_lsoa(once.clone(), &table);
        assert_eq!(once, twice);
    }

    #[test]
    fn duplicate_lookup_codes_rejected() {
        let row = lookup_for(&["L1"]).get("L1").unwrap().clone();
        assert!(LsoaTable::new(vec![row.clone(), row]).is_err());
    }

    #[test]
    fn lookup_and_truth_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = lookup_for(&["L1", "L2"]);
        let p = dir.path().join("lsoa.csv");
        write_lsoa_table(&p, &table).unwrap();
        assert_eq!(read_lsoa_table(&p).unwrap(), table);

        let t = dir.path().join("truth.csv");
        write_truth(&t, &["a".into(), "b".into()], &[1, 0]).unwrap();
        let truth = read_truth(&t).unwrap();
        assert_eq!(truth["a"], 1);
        assert_eq!(truth["b"], 0);
    }

    #[test]
    fn ingest_report_conserved_with_join() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut far = record("far");
        far.lsoa_code = "NOPE".into();
        let mut bad = record("bad");
        bad.host_response = 2.0;
        write_properties(&path, &[record("a"), far, bad]).unwrap();
        let (recs, rep) = ingest(
            &path,
            DateWindow::study(),
            Some(&lookup_for(&["E01000001"])),
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(rep.rows_dropped_join_miss, 1);
        assert_eq!(rep.rows_dropped_invalid, 1);
        assert!(rep.is_conserved());
    }
}
