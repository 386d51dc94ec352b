use std::path::Path;

use crate::data_model::{ColumnMeta, FeatureMatrix};
use crate::error::{Error, Result};
use crate::ingestion::{create, open};
use crate::matrix::Matrix;

/// Writes `property_id,<columns...>` to `csv_path` and the column metadata
/// to `columns_path`. Values use shortest round-trip formatting.
pub fn write_feature_matrix(
    csv_path: &Path,
    columns_path: &Path,
    fm: &FeatureMatrix,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(csv_path)?);
    let mut header = vec!["property_id".to_string()];
    header.extend(fm.column_names());
    out.write_record(&header)?;
    for (id, row) in fm.row_ids.iter().zip(fm.values.iter_rows()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.clone());
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    let mut text = serde_json::to_string_pretty(&fm.columns)?;
    text.push('\n');
    std::fs::write(columns_path, text)?;
    Ok(())
}

pub fn read_feature_matrix(csv_path: &Path, columns_path: &Path) -> Result<FeatureMatrix> {
    let columns: Vec<ColumnMeta> = serde_json::from_reader(open(columns_path)?)?;
    let mut reader = csv::Reader::from_reader(open(csv_path)?);
    let header = reader.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("property_id")
        .chain(columns.iter().map(|c| c.name.as_str()))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!(
            "{} header does not match {}",
            csv_path.display(),
            columns_path.display()
        )));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Schema(format!(
                    "{} row {i} column {j}: `{field}` is not a number",
                    csv_path.display()
                ))
            })?;
            data.push(v);
        }
    }
    let values = Matrix::new(ids.len(), columns.len(), data)?;
    FeatureMatrix::new(values, columns, ids)
}
