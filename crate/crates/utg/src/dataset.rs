//! Labelled CIR datasets as CSV.
//!
//! One header row, then one row per CIR:
//! `label,fp_index,fp_ampl1,fp_ampl2,fp_ampl3,max_noise,cir0,...,cir1015`
//! with label 0 for LOS and 1 for NLOS. CIR columns hold tap amplitudes.

use std::io::{Read, Write};
use std::path::Path;

use utg_core::channel::{CirFrame, Diagnostics, CIR_LEN};
use utg_core::ecir::{ecir_from_amplitudes, Ecir, EcirError};
use utg_core::Condition;

/// Columns before the CIR amplitudes.
pub const META_COLUMNS: usize = 6;
pub const COLUMNS: usize = META_COLUMNS + CIR_LEN;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: `{value}` is not a number")]
    NonNumeric { line: u64, column: usize, value: String },
    #[error("line {line}: label must be 0 (LOS) or 1 (NLOS), found `{value}`")]
    BadLabel { line: u64, value: String },
    #[error("line {line}: fp_index {value} is outside the frame")]
    BadIndex { line: u64, value: String },
    #[error("empty dataset file (no header)")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One dataset row: a CIR amplitude profile with its chip diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CirRecord {
    pub condition: Condition,
    pub diagnostics: Diagnostics,
    pub amplitudes: Vec<f64>,
}

impl CirRecord {
    pub fn from_frame(frame: &CirFrame, diagnostics: Diagnostics) -> Self {
        Self { condition: frame.condition, diagnostics, amplitudes: frame.amplitudes() }
    }

    /// The eCIR window, normalized by `max_noise` when `normalize` is set.
    pub fn ecir(&self, normalize: bool) -> Result<Ecir, EcirError> {
        ecir_from_amplitudes(&self.amplitudes, &self.diagnostics, self.condition, normalize)
    }
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> =
        ["label", "fp_index", "fp_ampl1", "fp_ampl2", "fp_ampl3", "max_noise"].iter().map(|s| s.to_string()).collect();
    h.extend((0..CIR_LEN).map(|i| format!("cir{i}")));
    h
}

pub fn write_dataset<W: Write>(out: W, records: &[CirRecord]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    let mut row = Vec::with_capacity(COLUMNS);
    for r in records {
        row.clear();
        row.push(((r.condition == Condition::Nlos) as u8).to_string());
        row.push(r.diagnostics.fp_index.to_string());
        row.extend(r.diagnostics.fp_ampl.iter().map(|a| a.to_string()));
        row.push(r.diagnostics.max_noise.to_string());
        row.extend(r.amplitudes.iter().map(|a| a.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DatasetError::Io { path: "<writer>".into(), source: e })?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<CirRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = rdr.records();
    match rows.next() {
        None => return Err(DatasetError::Empty),
        Some(h) => {
            let h = h?;
            if h.len() != COLUMNS {
                return Err(DatasetError::ColumnCount { line: 1, expected: COLUMNS, found: h.len() });
            }
        }
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != COLUMNS {
            return Err(DatasetError::ColumnCount { line, expected: COLUMNS, found: row.len() });
        }
        let num = |column: usize| -> Result<f64, DatasetError> {
            let s = row[column].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::NonNumeric { line, column: column + 1, value: s.to_string() })
        };
        let condition = match row[0].trim() {
            "0" => Condition::Los,
            "1" => Condition::Nlos,
            other => return Err(DatasetError::BadLabel { line, value: other.to_string() }),
        };
        let fp_index = row[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| DatasetError::NonNumeric { line, column: 2, value: row[1].to_string() })?;
        if fp_index >= CIR_LEN {
            return Err(DatasetError::BadIndex { line, value: row[1].to_string() });
        }
        let diagnostics = Diagnostics { fp_index, fp_ampl: [num(2)?, num(3)?, num(4)?], max_noise: num(5)? };
        let amplitudes = (META_COLUMNS..COLUMNS).map(num).collect::<Result<Vec<_>, _>>()?;
        out.push(CirRecord { condition, diagnostics, amplitudes });
    }
    Ok(out)
}

pub fn import_dataset(path: &Path) -> Result<Vec<CirRecord>, DatasetError> {
    let f = std::fs::File::open(path).map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    read_dataset(std::io::BufReader::new(f))
}

pub fn export_dataset(path: &Path, records: &[CirRecord]) -> Result<(), DatasetError> {
    let f = std::fs::File::create(path).map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e })?;
    write_dataset(std::io::BufWriter::new(f), records)
}
