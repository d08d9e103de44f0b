//! Exogenous time-series tables and their CSV ingestion.
//!
//! A table is dense: row `k` holds every track's value at step `k`. The CSV
//! form has a leading `k` column that must run `0, 1, 2, ...` without gaps.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("step index not increasing at row {row}: {prev} then {found}")]
    NonMonotoneIndex { row: usize, prev: i64, found: i64 },
    #[error("gap in series at k={0}")]
    GapInSeries(i64),
    #[error("row {row}, column `{column}`: {message}")]
    BadValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len());
        if let Some(first) = columns.first() {
            assert!(
                columns.iter().all(|c| c.len() == first.len()),
                "ragged series table"
            );
        }
        Self { names, columns }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{k}");
            for c in &self.columns {
                let _ = write!(out, ",{}", c[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a series CSV, requiring every column named in `schema`.
///
/// Columns outside the schema are kept. Gaps are errors; nothing is
/// interpolated.
pub fn load_series(csv_text: &str, schema: &[&str]) -> Result<SeriesTable, SeriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SeriesError::Csv(e.to_string()))?
        .clone();
    let header: Vec<&str> = headers.iter().collect();
    if !header.contains(&"k") {
        return Err(SeriesError::MissingColumn("k".into()));
    }
    for &col in schema {
        if !header.contains(&col) {
            return Err(SeriesError::MissingColumn(col.to_string()));
        }
    }
    let k_col = header
        .iter()
        .position(|&h| h == "k")
        .expect("checked above");
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut columns = vec![Vec::new(); names.len()];

    let mut prev: Option<i64> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SeriesError::Csv(e.to_string()))?;
        let k: i64 =
            record
                .get(k_col)
                .unwrap_or("")
                .parse()
                .map_err(|e: std::num::ParseIntError| SeriesError::BadValue {
                    row,
                    column: "k".into(),
                    message: e.to_string(),
                })?;
        let expected = prev.map_or(0, |p| p + 1);
        if let Some(p) = prev {
            if k <= p {
                return Err(SeriesError::NonMonotoneIndex {
                    row,
                    prev: p,
                    found: k,
                });
            }
        }
        if k != expected {
            return Err(SeriesError::GapInSeries(expected));
        }
        prev = Some(k);
        let mut c = 0;
        for (i, field) in record.iter().enumerate() {
            if i == k_col {
                continue;
            }
            let v: f64 =
                field
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| SeriesError::BadValue {
                        row,
                        column: names[c].clone(),
                        message: e.to_string(),
                    })?;
            columns[c].push(v);
            c += 1;
        }
    }
    Ok(SeriesTable::new(names, columns))
}
