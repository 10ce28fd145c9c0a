use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::recipe::Recipe;
use super::schema::{Dataset, Schema};
use crate::error::{Error, Result};

/// Row accounting for one load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    /// Body rows read, before filtering.
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    /// First unmappable attribute per dropped row, counted by attribute name.
    pub dropped_by_attribute: BTreeMap<String, usize>,
}

/// Reads an RFC-4180 CSV with a header row and maps every configured column
/// onto category indices. Rows with any unmappable cell are dropped and
/// counted. Columns not named by the recipe are ignored.
pub fn load_csv(path: impl AsRef<Path>, recipe: &Recipe) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, recipe)
}

pub fn read_csv<R: Read>(input: R, recipe: &Recipe) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(recipe.attributes.len());
    let mut missing = Vec::new();
    for a in &recipe.attributes {
        // first occurrence wins when a source file repeats a column name
        match header.iter().position(|h| h == a.column) {
            Some(p) => positions.push(p),
            None => missing.push(a.column.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::HeaderMismatch(missing));
    }

    let mut report = LoadReport::default();
    let mut cells = Vec::new();
    let mut row = Vec::with_capacity(positions.len());
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        report.rows_read += 1;
        row.clear();
        let mut bad = None;
        for (a, &p) in recipe.attributes.iter().zip(&positions) {
            match record.get(p).and_then(|raw| a.map_cell(raw)) {
                Some(v) => row.push(v),
                None => {
                    bad = Some(a.domain.name.clone());
                    break;
                }
            }
        }
        match bad {
            Some(name) => {
                report.rows_dropped += 1;
                *report.dropped_by_attribute.entry(name).or_default() += 1;
            }
            None => {
                report.rows_kept += 1;
                cells.extend_from_slice(&row);
            }
        }
    }
    if report.rows_kept == 0 {
        return Err(Error::AllRowsDropped {
            read: report.rows_read,
        });
    }
    Ok((Dataset::from_flat(recipe.schema().clone(), cells), report))
}

/// Writes a dataset as CSV using category labels, with attribute names as the
/// header. The output loads back through the same recipe unchanged.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let schema: &Schema = data.schema();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(schema.attributes().iter().map(|a| a.name.as_str()))?;
    for row in data.rows() {
        w.write_record(
            row.iter()
                .zip(schema.attributes())
                .map(|(&v, a)| a.values[v as usize].as_str()),
        )?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(data, std::io::BufWriter::new(file))
}
