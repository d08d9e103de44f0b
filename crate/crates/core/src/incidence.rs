//! Hetero-functional incidence tensors and their matricized form.
//!
//! The negative tensor records which capability pulls which operand from
//! which buffer; the positive tensor records injections. Matricization folds
//! the (operand, buffer) pair into a single buffer-major row index
//! `y·|L| + i`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{SystemModel, ENVIRONMENT};
use crate::sparse::CooMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncidenceError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

/// Third-order sparse incidence tensor over (operand, buffer, capability).
#[derive(Debug, Clone, PartialEq)]
pub struct Hfit {
    pub sign: Sign,
    /// `(|L|, |B_S|, |E_S|)`
    pub dims: (usize, usize, usize),
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl Hfit {
    pub fn new(sign: Sign, dims: (usize, usize, usize)) -> Self {
        Self {
            sign,
            dims,
            entries: BTreeMap::new(),
        }
    }

    /// Accumulates `weight` at `(i, y, psi)`.
    pub fn insert(&mut self, i: usize, y: usize, psi: usize, weight: f64) {
        assert!(
            i < self.dims.0 && y < self.dims.1 && psi < self.dims.2,
            "index outside tensor dims"
        );
        assert!(weight > 0.0, "tensor weights must be positive");
        *self.entries.entry((i, y, psi)).or_insert(0.0) += weight;
    }

    pub fn get(&self, i: usize, y: usize, psi: usize) -> f64 {
        self.entries.get(&(i, y, psi)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Coordinates whose weight differs from the unweighted default of 1.
    pub fn non_unit_weights(&self) -> Vec<(usize, usize, usize)> {
        self.entries
            .iter()
            .filter(|(_, &w)| w != 1.0)
            .map(|(&k, _)| k)
            .collect()
    }

    /// Debug export: one `i y psi w` line per entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for ((i, y, psi), w) in self.entries() {
            let _ = writeln!(out, "{i} {y} {psi} {w}");
        }
        out
    }
}

/// Builds the (negative, positive) tensor pair for a validated model.
pub fn build_hfits(model: &SystemModel) -> (Hfit, Hfit) {
    let dims = (
        model.num_operands(),
        model.num_buffers(),
        model.num_capabilities(),
    );
    let mut negative = Hfit::new(Sign::Negative, dims);
    let mut positive = Hfit::new(Sign::Positive, dims);
    for (psi, cap) in model.capabilities().iter().enumerate() {
        let process = model.process(&cap.process).expect("validated model");
        if cap.origin != ENVIRONMENT {
            let y = model.buffer_index(&cap.origin).expect("validated model");
            for input in &process.inputs {
                if input.quantity > 0.0 {
                    let i = model
                        .operand_index(&input.operand)
                        .expect("validated model");
                    negative.insert(i, y, psi, input.quantity);
                }
            }
        }
        if cap.destination != ENVIRONMENT {
            let y = model
                .buffer_index(&cap.destination)
                .expect("validated model");
            for output in &process.outputs {
                if output.quantity > 0.0 {
                    let i = model
                        .operand_index(&output.operand)
                        .expect("validated model");
                    positive.insert(i, y, psi, output.quantity);
                }
            }
        }
    }
    (negative, positive)
}

/// The matricized incidence pair and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices {
    pub m_plus: CooMatrix,
    pub m_minus: CooMatrix,
    pub m: CooMatrix,
}

impl IncidenceMatrices {
    pub fn new(m_plus: CooMatrix, m_minus: CooMatrix) -> Result<Self, IncidenceError> {
        if m_plus.shape() != m_minus.shape() {
            return Err(IncidenceError::DimMismatch(format!(
                "M+ is {:?} but M- is {:?}",
                m_plus.shape(),
                m_minus.shape()
            )));
        }
        let m = m_plus.sub(&m_minus);
        Ok(Self { m_plus, m_minus, m })
    }

    pub fn from_dense(m_plus: &[Vec<f64>], m_minus: &[Vec<f64>]) -> Result<Self, IncidenceError> {
        Self::new(
            CooMatrix::from_dense(m_plus),
            CooMatrix::from_dense(m_minus),
        )
    }

    pub fn num_places(&self) -> usize {
        self.m.rows()
    }

    pub fn num_transitions(&self) -> usize {
        self.m.cols()
    }
}

pub fn matricize(negative: &Hfit, positive: &Hfit) -> Result<IncidenceMatrices, IncidenceError> {
    if negative.dims != positive.dims {
        return Err(IncidenceError::DimMismatch(format!(
            "negative tensor {:?} vs positive tensor {:?}",
            negative.dims, positive.dims
        )));
    }
    let (nl, nb, ne) = negative.dims;
    let fold = |t: &Hfit| {
        let mut m = CooMatrix::zeros(nl * nb, ne);
        for ((i, y, psi), w) in t.entries() {
            m.set(y * nl + i, psi, w);
        }
        m
    };
    IncidenceMatrices::new(fold(positive), fold(negative))
}

/// Convenience: tensors then matrices.
pub fn incidence_of(model: &SystemModel) -> IncidenceMatrices {
    let (neg, pos) = build_hfits(model);
    matricize(&neg, &pos).expect("tensors built from one model share dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_lands_on_buffer_major_row() {
        let mut pos = Hfit::new(Sign::Positive, (3, 3, 1));
        pos.insert(1, 2, 0, 1.0);
        let neg = Hfit::new(Sign::Negative, (3, 3, 1));
        let m = matricize(&neg, &pos).unwrap();
        assert_eq!(m.m_plus.get(7, 0), 1.0);
        assert_eq!(m.m_plus.nnz(), 1);
        assert_eq!(m.m.get(7, 0), 1.0);
    }

    #[test]
    fn empty_tensors_give_zero_matrices() {
        let pos = Hfit::new(Sign::Positive, (1, 2, 0));
        let neg = Hfit::new(Sign::Negative, (1, 2, 0));
        let m = matricize(&neg, &pos).unwrap();
        assert_eq!(m.m.shape(), (2, 0));
        assert_eq!(m.m.nnz(), 0);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let pos = Hfit::new(Sign::Positive, (1, 2, 3));
        let neg = Hfit::new(Sign::Negative, (1, 2, 4));
        assert!(matches!(
            matricize(&neg, &pos),
            Err(IncidenceError::DimMismatch(_))
        ));
    }

    #[test]
    fn coordinate_text_lists_entries() {
        let mut t = Hfit::new(Sign::Negative, (2, 2, 2));
        t.insert(0, 1, 1, 1.0);
        t.insert(1, 0, 0, 2.5);
        assert_eq!(t.to_coordinate_text(), "0 1 1 1\n1 0 0 2.5\n");
        assert_eq!(t.non_unit_weights(), vec![(1, 0, 0)]);
    }
}
