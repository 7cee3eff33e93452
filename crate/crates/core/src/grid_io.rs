//! Plain CSV numeric grids: row-major, comma separated, no header.
//!
//! Non-finite values are written as `inf`, `-inf` and `nan`. Finite values use
//! the shortest representation that parses back to the same `f64`, so a
//! write/read cycle is lossless and output is byte-stable.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{v:?}")
    }
}

pub fn grid_to_csv(grid: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(grid.len() * 12);
    for i in 0..grid.nrows() {
        for j in 0..grid.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_value(grid[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv_grid(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("row {}: bad number {field:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::RaggedGrid {
            row: i,
            expected: ncols,
            found: r.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_grid(&text, path)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, grid_to_csv(grid).as_bytes())
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`. Parent directories are created as needed.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
