use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::run::ConvergenceRecord;

pub const CSV_HEADER: [&str; 4] = ["seed", "step", "loss", "elapsed_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Picks the format from a `.json` or `.csv` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

pub fn emit(records: &[ConvergenceRecord], format: OutputFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        OutputFormat::Csv => write_csv(records, file).map_err(|e| csv_error(path, e)),
        OutputFormat::Json => {
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, records)
                .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        }
    }
}

/// Writes the trace table; floats use the shortest round-trip form.
pub fn write_csv<W: Write>(records: &[ConvergenceRecord], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for record in records {
        for row in &record.rows {
            w.write_record([
                record.seed.to_string(),
                row.step.to_string(),
                row.loss.to_string(),
                format!("{:.3}", row.elapsed_ms),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Serializes any result type as pretty JSON.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
