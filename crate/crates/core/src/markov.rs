//! Seeded Markov-chain generator for synthetic exogenous tracks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::series::SeriesTable;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("track `{track}`: transition row {row} sums to {sum}, not 1")]
    NonStochasticMatrix { track: String, row: usize, sum: f64 },
    #[error("track `{track}`: {message}")]
    Shape { track: String, message: String },
}

/// One discrete-state chain emitting `states[current]` at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTrack {
    pub name: String,
    pub states: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub initial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSpec {
    pub tracks: Vec<MarkovTrack>,
}

impl MarkovTrack {
    pub fn validate(&self) -> Result<(), MarkovError> {
        let shape = |message: String| MarkovError::Shape {
            track: self.name.clone(),
            message,
        };
        let n = self.states.len();
        if n == 0 {
            return Err(shape("no states".into()));
        }
        if self.transition.len() != n {
            return Err(shape(format!(
                "{} transition rows for {} states",
                self.transition.len(),
                n
            )));
        }
        if self.initial >= n {
            return Err(shape(format!(
                "initial state {} out of range",
                self.initial
            )));
        }
        for (row, probs) in self.transition.iter().enumerate() {
            if probs.len() != n {
                return Err(shape(format!("row {row} has {} entries", probs.len())));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(shape(format!("row {row} has a probability outside [0, 1]")));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MarkovError::NonStochasticMatrix {
                    track: self.name.clone(),
                    row,
                    sum,
                });
            }
        }
        Ok(())
    }
}

fn sample_row(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the final cumulative sum
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Generates `steps + 1` rows (k = 0..=steps); row 0 is the initial state.
///
/// Tracks draw from one seeded stream in declaration order, so output is a
/// pure function of `(spec, seed, steps)`.
pub fn gen_exogenous(
    spec: &MarkovSpec,
    seed: u64,
    steps: usize,
) -> Result<SeriesTable, MarkovError> {
    for t in &spec.tracks {
        t.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current: Vec<usize> = spec.tracks.iter().map(|t| t.initial).collect();
    let mut columns: Vec<Vec<f64>> = spec
        .tracks
        .iter()
        .map(|_| Vec::with_capacity(steps + 1))
        .collect();
    for k in 0..=steps {
        if k > 0 {
            for (t, state) in spec.tracks.iter().zip(current.iter_mut()) {
                let u: f64 = rng.random();
                *state = sample_row(&t.transition[*state], u);
            }
        }
        for ((t, &state), col) in spec.tracks.iter().zip(&current).zip(columns.iter_mut()) {
            col.push(t.states[state]);
        }
    }
    Ok(SeriesTable::new(
        spec.tracks.iter().map(|t| t.name.clone()).collect(),
        columns,
    ))
}
