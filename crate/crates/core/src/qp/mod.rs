//! Solvers for assembled HFNMCF problems.
//!
//! Equality-constrained programs go through one dense KKT solve, boxed ones
//! through a primal active-set method, and fully determined initial-value
//! problems (null objective, explicit device models) through forward
//! propagation, which also handles nonlinear device models.

pub mod dense;
pub mod forward;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hfnmcf::{
    ConstraintBlock, DeviceBlock, DeviceKind, HfnmcfProblem, ObjectiveKind, Source,
};
use crate::nets::NetError;

pub use dense::{solve_box_qp, solve_equality_qp, QpError, QpOptions, QpResult, Status};
pub use forward::forward_propagate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Auto,
    KktDirect,
    ForwardPropagate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: Mode,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub regularization: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Auto,
            max_iterations: 500,
            tolerance: 1e-8,
            regularization: 0.0,
        }
    }
}

impl SolveOptions {
    fn qp(&self) -> QpOptions {
        QpOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            regularization: self.regularization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("step {step}: `{variable}` has no determining pin, row or device model")]
    UnderdeterminedStep { step: usize, variable: String },
    #[error("step {step}: `{variable}` is not finite")]
    NonfiniteState { step: usize, variable: String },
    #[error("not an initial-value problem: {0}")]
    NotInitialValue(String),
    #[error("device model `{0}` is nonlinear; only forward propagation supports it")]
    NonlinearDevice(String),
    #[error("device model `{0}`: inequalities on the QP path must bound a single variable")]
    UnsupportedInequality(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Net(NetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Equality multipliers grouped by constraint block (empty when
    /// propagated forward).
    pub multipliers: Vec<(ConstraintBlock, Vec<f64>)>,
    pub status: Status,
    /// Infinity norm of each block's residual.
    pub residuals: Vec<(ConstraintBlock, f64)>,
    pub max_residual: f64,
    pub mode: Mode,
    pub iterations: usize,
    pub objective: f64,
}

/// Objective `Σ_k x[k]ᵀ F x[k] + fᵀ x[k]`.
pub fn objective_value(problem: &HfnmcfProblem, x: &[f64]) -> f64 {
    let w = problem.layout.width();
    x.iter()
        .enumerate()
        .map(|(c, v)| {
            let o = c % w;
            problem.quadratic[o] * v * v + problem.linear[o] * v
        })
        .sum()
}

/// Whether the problem is a pure initial-value recursion.
pub fn forward_eligible(problem: &HfnmcfProblem) -> bool {
    problem.report.objective == ObjectiveKind::Feasibility
        && !problem.has_final_conditions
        && problem
            .devices
            .iter()
            .all(|d| d.model.kind == DeviceKind::Inequality || d.target.is_some())
}

fn finish(problem: &HfnmcfProblem, x: Vec<f64>, y: Vec<f64>, mode: Mode, tol: f64) -> Solution {
    let res = problem
        .evaluate_residuals(&x, &y)
        .expect("solver output has layout dimensions");
    let residuals = res.norms();
    let max_residual = res.max_abs();
    let scale = problem
        .rows
        .iter()
        .map(|r| r.rhs.abs())
        .chain(x.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let status = if max_residual <= tol * scale {
        Status::Optimal
    } else {
        Status::Infeasible
    };
    let objective = objective_value(problem, &x);
    Solution {
        x,
        y,
        multipliers: vec![],
        status,
        residuals,
        max_residual,
        mode,
        iterations: 0,
        objective,
    }
}

/// Solves with the requested mode; `Auto` prefers forward propagation and
/// falls back to the KKT path when some step is underdetermined.
pub fn solve(problem: &HfnmcfProblem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    if !(opts.tolerance > 0.0) {
        return Err(SolveError::InvalidTolerance(opts.tolerance));
    }
    match opts.mode {
        Mode::ForwardPropagate => {
            let (x, y) = forward_propagate(problem)?;
            Ok(finish(
                problem,
                x,
                y,
                Mode::ForwardPropagate,
                opts.tolerance,
            ))
        }
        Mode::KktDirect => solve_kkt(problem, opts),
        Mode::Auto => {
            if forward_eligible(problem) {
                match forward_propagate(problem) {
                    Ok((x, y)) => {
                        return Ok(finish(
                            problem,
                            x,
                            y,
                            Mode::ForwardPropagate,
                            opts.tolerance,
                        ))
                    }
                    Err(SolveError::UnderdeterminedStep { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            solve_kkt(problem, opts)
        }
    }
}

/// Affine model `f(a) = f0 + Σ g_j a_j`, probed with unit vectors.
fn linearize(f: &dyn Fn(&[f64]) -> f64, n: usize) -> (f64, Vec<f64>) {
    let zero = vec![0.0; n];
    let f0 = f(&zero);
    let grads = (0..n)
        .map(|j| {
            let mut e = zero.clone();
            e[j] = 1.0;
            f(&e) - f0
        })
        .collect();
    (f0, grads)
}

/// Dense `(H, c, A, b, lower, upper)` over the joint vector `[X; Y]`,
/// with the row blocks for multiplier bookkeeping.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub row_blocks: Vec<ConstraintBlock>,
}

pub fn to_dense(problem: &HfnmcfProblem) -> Result<DenseQp, SolveError> {
    let l = &problem.layout;
    let np = l.num_primary();
    let n = np + l.num_auxiliary();
    let w = l.width();

    let mut h = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for col in 0..np {
        // the solver minimizes ½xᵀHx, the program xᵀFx
        h[(col, col)] = 2.0 * problem.quadratic[col % w];
        c[col] = problem.linear[col % w];
    }
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for k in 0..l.steps() {
        for &(off, lo, hi) in &problem.bounds {
            let col = k * w + off;
            lower[col] = lower[col].max(lo);
            upper[col] = upper[col].min(hi);
        }
    }

    let mut rows: Vec<(ConstraintBlock, BTreeMap<usize, f64>, f64)> = problem
        .rows
        .iter()
        .map(|r| (r.block, r.terms.iter().copied().collect(), r.rhs))
        .collect();

    for d in &problem.devices {
        if !d.model.linear {
            return Err(SolveError::NonlinearDevice(d.model.name.clone()));
        }
        let block = match d.model.block {
            DeviceBlock::Primary => ConstraintBlock::DeviceEquality,
            DeviceBlock::Auxiliary => ConstraintBlock::DeviceAuxiliary,
        };
        let (f0, grads) = linearize(&*d.model.eval, d.reads.len());
        let col_of = |k: usize, s: Source| match s {
            Source::Primary(v) => l.col(k, v),
            Source::Aux(j) => Some(l.aux_col(k, j)),
            Source::Exogenous(_) => None,
        };
        for k in 0..l.steps() {
            // f(reads) with exogenous reads folded into the constant
            let mut constant = f0;
            let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
            for (&s, &g) in d.reads.iter().zip(&grads) {
                match col_of(k, s) {
                    Some(col) => *terms.entry(col).or_insert(0.0) += g,
                    None => constant += g * problem.source_value(k, s, &[], &[]),
                }
            }
            match d.model.kind {
                DeviceKind::Equality => {
                    // target − f = 0  ⇔  target − Σ g a = f0'
                    let mut row: BTreeMap<usize, f64> =
                        terms.into_iter().map(|(c, g)| (c, -g)).collect();
                    if let Some(t) = d.target {
                        *row.entry(col_of(k, t).expect("targets are variables"))
                            .or_insert(0.0) += 1.0;
                    }
                    rows.push((block, row, constant));
                }
                DeviceKind::Inequality => {
                    let live: Vec<(usize, f64)> =
                        terms.into_iter().filter(|&(_, g)| g != 0.0).collect();
                    match live.as_slice() {
                        [] if constant <= 0.0 => {}
                        [(col, g)] => {
                            // g·v + constant ≤ 0
                            let bound = -constant / g;
                            if *g > 0.0 {
                                upper[*col] = upper[*col].min(bound);
                            } else {
                                lower[*col] = lower[*col].max(bound);
                            }
                        }
                        _ => return Err(SolveError::UnsupportedInequality(d.model.name.clone())),
                    }
                }
            }
        }
    }

    let m = rows.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut row_blocks = Vec::with_capacity(m);
    for (i, (block, terms, rhs)) in rows.into_iter().enumerate() {
        for (col, v) in terms {
            a[(i, col)] = v;
        }
        b[i] = rhs;
        row_blocks.push(block);
    }
    Ok(DenseQp {
        h,
        c,
        a,
        b,
        lower,
        upper,
        row_blocks,
    })
}

fn solve_kkt(problem: &HfnmcfProblem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let qp = to_dense(problem)?;
    let boxed = qp.lower.iter().any(|v| v.is_finite()) || qp.upper.iter().any(|v| v.is_finite());
    let r = if boxed {
        solve_box_qp(&qp.h, &qp.c, &qp.a, &qp.b, &qp.lower, &qp.upper, &opts.qp())?
    } else {
        solve_equality_qp(&qp.h, &qp.c, &qp.a, &qp.b, &opts.qp())?
    };
    let np = problem.layout.num_primary();
    let x: Vec<f64> = r.x.rows(0, np).iter().copied().collect();
    let y: Vec<f64> = r.x.rows(np, r.x.len() - np).iter().copied().collect();
    let mut grouped: BTreeMap<ConstraintBlock, Vec<f64>> = BTreeMap::new();
    for (i, block) in qp.row_blocks.iter().enumerate() {
        grouped.entry(*block).or_default().push(r.lambda[i]);
    }
    let res = problem
        .evaluate_residuals(&x, &y)
        .expect("layout dimensions");
    let residuals = res.norms();
    let max_residual = res.max_abs();
    let objective = objective_value(problem, &x);
    Ok(Solution {
        x,
        y,
        multipliers: grouped.into_iter().collect(),
        status: r.status,
        residuals,
        max_residual,
        mode: Mode::KktDirect,
        iterations: r.iterations,
        objective,
    })
}
