use std::path::Path;

use super::NodeTable;
use crate::error::{Error, Result};
use crate::geometry::Coordinates;

pub const REQUIRED_COLUMNS: [&str; 9] = [
    "id",
    "lon",
    "lat",
    "fluoride",
    "ph",
    "detection_freq",
    "soil_type",
    "dfi",
    "region",
];

/// Reads a dataset CSV. Columns are located by header name; extra columns
/// are ignored. The returned table is not standardized.
pub fn load_csv(path: &Path) -> Result<NodeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut pos = [0usize; 9];
    for (slot, name) in pos.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })?;
    }

    let (mut ids, mut coords, mut numeric, mut soil, mut dfi, mut region) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |c: usize| rec.get(pos[c]).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            let raw = field(c);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: REQUIRED_COLUMNS[c].to_string(),
                    detail: format!("`{}` is not a finite number", raw),
                }),
            }
        };
        ids.push(field(0).to_string());
        coords.push(Coordinates::new(num(1)?, num(2)?));
        numeric.push([num(3)?, num(4)?, num(5)?]);
        let s = field(6);
        if s.is_empty() {
            return Err(Error::Parse {
                row,
                column: "soil_type".into(),
                detail: "empty category".into(),
            });
        }
        soil.push(s.to_string());
        dfi.push(num(7)?);
        region.push(field(8).parse::<u32>().map_err(|_| Error::Parse {
            row,
            column: "region".into(),
            detail: format!("`{}` is not a small non-negative integer", field(8)),
        })?);
    }
    NodeTable::from_columns(ids, coords, numeric, soil, dfi, region)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            row: 0,
            column: String::new(),
            detail: format!("{:?}", other),
        },
    }
}

/// Writes a raw (unstandardized) table in the dataset CSV layout.
pub fn write_csv(table: &NodeTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(REQUIRED_COLUMNS).map_err(io)?;
    for i in 0..table.len() {
        let f = table.features.row(i);
        let rec = [
            table.ids[i].clone(),
            table.coords[i].lon.to_string(),
            table.coords[i].lat.to_string(),
            f[0].to_string(),
            f[1].to_string(),
            f[2].to_string(),
            table.soil_type[i].clone(),
            table.dfi[i].to_string(),
            table.region[i].to_string(),
        ];
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
