//! Tuple file readers for ingestion and replay: NDJSON and CSV.
//!
//! CSV files need a header row; the `ts` column (milliseconds) is
//! required, `src` is optional and every other column is an attribute.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::StoreError;
use crate::model::{Timestamp, Tuple, Value, SRC_KEY, TS_KEY};

#[derive(Debug, Clone, PartialEq)]
pub struct Malformed {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedInput {
    pub tuples: Vec<Tuple>,
    pub malformed: Vec<Malformed>,
}

impl ParsedInput {
    /// Lines read, excluding blanks and the CSV header.
    pub fn lines(&self) -> usize {
        self.tuples.len() + self.malformed.len()
    }
}

pub fn read_ndjson(reader: impl BufRead) -> std::io::Result<ParsedInput> {
    let mut out = ParsedInput::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match Tuple::from_ndjson(&line) {
            Ok(t) => out.tuples.push(t),
            Err(e) => out.malformed.push(Malformed {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn csv_value(cell: &str) -> Value {
    if let Ok(i) = cell.parse::<i64>() {
        return Value::Int(i);
    }
    if let Ok(x) = cell.parse::<f64>() {
        return Value::Float(x);
    }
    let mut chars = cell.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Value::Char(c),
        _ => Value::Str(cell.to_string()),
    }
}

pub fn read_csv(reader: impl Read) -> Result<ParsedInput, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let Some(ts_col) = headers.iter().position(|h| h == TS_KEY) else {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "CSV header has no `ts` column",
        )));
    };
    let src_col = headers.iter().position(|h| h == SRC_KEY);

    let mut out = ParsedInput::default();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.malformed.push(Malformed {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let ts = match record.get(ts_col).map(str::parse::<u64>) {
            Some(Ok(ts)) => ts,
            _ => {
                out.malformed.push(Malformed {
                    line,
                    reason: "`ts` is not a non-negative integer".into(),
                });
                continue;
            }
        };
        let src = src_col.and_then(|c| record.get(c)).unwrap_or_default();
        let attributes: BTreeMap<String, Value> = headers
            .iter()
            .zip(record.iter())
            .enumerate()
            .filter(|(c, (_, cell))| *c != ts_col && Some(*c) != src_col && !cell.is_empty())
            .map(|(_, (h, cell))| (h.to_string(), csv_value(cell)))
            .collect();
        match Tuple::new(Timestamp(ts), src, attributes) {
            Ok(t) => out.tuples.push(t),
            Err(e) => out.malformed.push(Malformed {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Reads a tuple file, choosing CSV for a `.csv` extension and NDJSON
/// otherwise.
pub fn read_path(path: &Path) -> Result<ParsedInput, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(file).map_err(|e| io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    } else {
        read_ndjson(BufReader::new(file)).map_err(io)
    }
}
