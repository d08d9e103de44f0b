//! Coordinate-format sparse matrices with a canonical (row, col) ordering.

use std::collections::BTreeMap;

/// Sparse matrix stored as sorted `(row, col) -> value` triplets.
///
/// Explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl CooMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let rows = dense.len();
        let cols = dense.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (r, row) in dense.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged dense matrix");
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Sets an entry; a zero value removes it.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r < self.rows && c < self.cols,
            "({r}, {c}) outside {}x{}",
            self.rows,
            self.cols
        );
        if v == 0.0 {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), v);
        }
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let cur = self.get(r, c);
        self.set(r, c, cur + v);
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries.get(&(r, c)).copied().unwrap_or(0.0)
    }

    /// Triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .range((r, 0)..(r + 1, 0))
            .map(|(&(_, c), &v)| (c, v))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (&(r, c), &v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![0.0; self.cols];
        for (&(r, c), &v) in &self.entries {
            x[c] += v * y[r];
        }
        x
    }

    pub fn sub(&self, other: &CooMatrix) -> CooMatrix {
        assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        for (r, c, v) in other.triplets() {
            out.add(r, c, -v);
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_entries_are_dropped() {
        let mut m = CooMatrix::zeros(2, 2);
        m.set(0, 1, 3.0);
        m.add(0, 1, -3.0);
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn products_match_dense() {
        let m = CooMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, -1.0, 4.0]]);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, 10.0]);
        assert_eq!(m.transpose_mul_vec(&[1.0, 1.0]), vec![1.0, -1.0, 6.0]);
        let row: Vec<_> = m.row_entries(1).collect();
        assert_eq!(row, vec![(1, -1.0), (2, 4.0)]);
    }
}
