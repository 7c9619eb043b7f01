//! CSV, JSON and binary snapshot writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{ForgeError, Result};

/// Writes serializable rows as CSV with a header row.
pub fn write_rows<W: Write, R: Serialize>(w: W, rows: &[R]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| ForgeError::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_file<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_rows(std::io::BufWriter::new(f), rows)
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ForgeError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Little-endian `f64` array.
pub fn write_f64_file(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(ForgeError::Io(format!("{}: length is not a multiple of 8", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
