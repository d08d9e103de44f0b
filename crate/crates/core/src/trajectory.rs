//! Time-indexed records of named variables, shared by both engines.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("row {row}: expected {expected} values, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv: {0}")]
    Csv(String),
}

/// Column-major trajectory: one column per variable, one row per step `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dt: f64, names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self { dt, names, columns }
    }

    pub fn from_columns(dt: f64, names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len());
        if let Some(first) = columns.first() {
            assert!(
                columns.iter().all(|c| c.len() == first.len()),
                "ragged trajectory"
            );
        }
        Self { dt, names, columns }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), TrajectoryError> {
        if row.len() != self.names.len() {
            return Err(TrajectoryError::RowWidth {
                row: self.len(),
                expected: self.names.len(),
                found: row.len(),
            });
        }
        for (col, &v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
        Ok(())
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

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[k]).collect()
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

    pub fn from_csv(text: &str, dt: f64) -> Result<Self, TrajectoryError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| TrajectoryError::Csv(e.to_string()))?
            .clone();
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut traj = Trajectory::new(dt, names);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| TrajectoryError::Csv(e.to_string()))?;
            let values = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| TrajectoryError::Csv(format!("row {row}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            traj.push_row(&values)?;
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Trajectory::new(1.0, vec!["a".into(), "b".into()]);
        t.push_row(&[1.0, 0.1]).unwrap();
        t.push_row(&[2.5, f64::NAN]).unwrap();
        let csv = t.to_csv();
        assert_eq!(csv, "k,a,b\n0,1,0.1\n1,2.5,NaN\n");
        let back = Trajectory::from_csv(&csv, 1.0).unwrap();
        assert_eq!(back.column("a").unwrap(), &[1.0, 2.5]);
        assert!(back.column("b").unwrap()[1].is_nan());
    }

    #[test]
    fn row_width_checked() {
        let mut t = Trajectory::new(1.0, vec!["a".into()]);
        assert!(t.push_row(&[1.0, 2.0]).is_err());
    }
}
