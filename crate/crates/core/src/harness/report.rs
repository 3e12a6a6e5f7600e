use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};

/// One run. Column order is part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub algorithm: String,
    pub instance: String,
    pub d: usize,
    pub eps: f64,
    pub nu: f64,
    pub seed: u64,
    pub iterations: usize,
    pub zeroth_queries: u64,
    pub first_queries: u64,
    pub binary_queries: u128,
    pub success: bool,
    pub grad_norm_final: f64,
    pub min_eig_final: f64,
    pub wall_ms: u64,
}

pub const COLUMNS: [&str; 15] = [
    "run_id",
    "algorithm",
    "instance",
    "d",
    "eps",
    "nu",
    "seed",
    "iterations",
    "zeroth_queries",
    "first_queries",
    "binary_queries",
    "success",
    "grad_norm_final",
    "min_eig_final",
    "wall_ms",
];

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(COLUMNS).map_err(|e| Error::Io(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Io(e.to_string())))
        .collect()
}

pub fn write_json<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// Write rows to `path`, or to standard output when `path` is `-`.
pub fn emit(rows: &[ReportRow], path: &Path, format: OutputFormat) -> Result<()> {
    let write = |out: Box<dyn Write>| match format {
        OutputFormat::Csv => write_csv(rows, out),
        OutputFormat::Json => write_json(rows, out),
    };
    if path == Path::new("-") {
        write(Box::new(std::io::stdout().lock()))
    } else {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        write(Box::new(std::io::BufWriter::new(file)))
    }
}
