//! Dense convex QP kernels.
//!
//! Both solvers minimize `½ xᵀHx + cᵀx` subject to `Ax = b`; the box
//! variant adds `l ≤ x ≤ u`. Stationarity is reported in the form
//! `Hx + c + Aᵀλ − μ = 0`, with `μ ≥ 0` on active lower bounds and
//! `μ ≤ 0` on active upper bounds.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("KKT matrix is singular; enable regularization or remove redundant constraints")]
    SingularKkt,
    #[error("bounds of variable {0} have lower > upper")]
    InvalidBounds(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub regularization: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
            regularization: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub bound_multipliers: DVector<f64>,
    pub status: Status,
    /// `‖Hx + c + Aᵀλ − μ‖∞`
    pub stationarity: f64,
    /// `‖Ax − b‖∞`
    pub primal: f64,
    pub iterations: usize,
}

impl QpResult {
    pub fn objective(&self, h: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
        0.5 * self.x.dot(&(h * &self.x)) + c.dot(&self.x)
    }
}

fn check_dims(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(), QpError> {
    let n = c.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(QpError::DimMismatch(format!(
            "H is {}x{}, c has {n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if a.ncols() != n || a.nrows() != b.len() {
        return Err(QpError::DimMismatch(format!(
            "A is {}x{}, b has {}, n = {n}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(())
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Scale for relative tolerances.
fn scale(c: &DVector<f64>, b: &DVector<f64>) -> f64 {
    1.0f64.max(inf_norm(c)).max(inf_norm(b))
}

fn residuals(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> (f64, f64) {
    let grad = h * x + c + a.transpose() * lambda - mu;
    (inf_norm(&grad), inf_norm(&(a * x - b)))
}

/// Least-squares solution of `Ax = b` and its residual.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.nrows() == 0 || a.ncols() == 0 {
        return (DVector::zeros(a.ncols()), inf_norm(b));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let x = svd.solve(b, eps).expect("u and v computed");
    let r = inf_norm(&(a * &x - b));
    (x, r)
}

fn lu_rank_deficient(lu: &nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    if n == 0 {
        return false;
    }
    let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    max == 0.0 || diag.iter().any(|&d| d <= max * 1e-13 * n as f64)
}

/// KKT solve for `min ½xᵀHx + cᵀx  s.t.  Ax = b`.
///
/// Returns status `Infeasible` (with the least-squares point) when `b` is
/// not in the range of `A`.
pub fn solve_equality_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpResult, QpError> {
    check_dims(h, c, a, b)?;
    if !(opts.tolerance > 0.0) {
        return Err(QpError::InvalidTolerance(opts.tolerance));
    }
    let (n, m) = (c.len(), b.len());
    let tol = opts.tolerance * scale(c, b);

    let (x_ls, r_ls) = least_squares(a, b);
    if r_ls > tol {
        let lambda = DVector::zeros(m);
        let mu = DVector::zeros(n);
        let (s, p) = residuals(h, c, a, b, &x_ls, &lambda, &mu);
        return Ok(QpResult {
            x: x_ls,
            lambda,
            bound_multipliers: mu,
            status: Status::Infeasible,
            stationarity: s,
            primal: p,
            iterations: 0,
        });
    }

    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-c));
    rhs.rows_mut(n, m).copy_from(b);

    let eps = opts.regularization;
    let sol = if eps > 0.0 {
        let mut reg = kkt.clone();
        for i in 0..n {
            reg[(i, i)] += eps;
        }
        for i in n..n + m {
            reg[(i, i)] -= eps;
        }
        let lu = reg.full_piv_lu();
        let mut s = lu.solve(&rhs).ok_or(QpError::SingularKkt)?;
        // iterative refinement against the unregularized system
        for _ in 0..opts.max_iterations.clamp(1, 50) {
            let r = &rhs - &kkt * &s;
            if inf_norm(&r) <= tol * 1e-3 {
                break;
            }
            match lu.solve(&r) {
                Some(d) => s += d,
                None => break,
            }
        }
        s
    } else {
        let lu = kkt.clone().full_piv_lu();
        if lu_rank_deficient(&lu) {
            return Err(QpError::SingularKkt);
        }
        let mut s = lu.solve(&rhs).ok_or(QpError::SingularKkt)?;
        let r = &rhs - &kkt * &s;
        if let Some(d) = lu.solve(&r) {
            s += d;
        }
        s
    };

    let x = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, m).into_owned();
    let mu = DVector::zeros(n);
    let (s, p) = residuals(h, c, a, b, &x, &lambda, &mu);
    let status = if s <= tol && p <= tol {
        Status::Optimal
    } else {
        Status::MaxIterations
    };
    Ok(QpResult {
        x,
        lambda,
        bound_multipliers: mu,
        status,
        stationarity: s,
        primal: p,
        iterations: 1,
    })
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to at least n rows so the SVD returns a full right basis
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.max();
    let cut = smax.max(1.0) * 1e-11 * n as f64;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .collect();
    let mut z = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        z.set_column(j, &v_t.row(i).transpose());
    }
    z
}

enum Step {
    Newton(DVector<f64>),
    Ray(DVector<f64>),
}

/// Minimizer of the quadratic model on the null space of the active
/// constraints, or a zero-curvature descent ray when it does not exist.
fn subproblem(hff: &DMatrix<f64>, gf: &DVector<f64>, z: &DMatrix<f64>, tol: f64) -> Step {
    let r = z.transpose() * hff * z;
    let s = z.transpose() * gf;
    if r.nrows() == 0 {
        return Step::Newton(DVector::zeros(hff.nrows()));
    }
    let dim = r.nrows();
    let eig = r.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = lmax.max(1.0) * 1e-10;
    let mut w = DVector::zeros(dim);
    let mut ray = DVector::zeros(dim);
    let mut has_ray = false;
    for i in 0..dim {
        let q = eig.eigenvectors.column(i);
        let qs = q.dot(&s);
        if eig.eigenvalues[i] > cut {
            w -= q * (qs / eig.eigenvalues[i]);
        } else if qs.abs() > tol {
            ray -= q * qs;
            has_ray = true;
        }
    }
    if has_ray {
        Step::Ray(z * ray)
    } else {
        Step::Newton(z * w)
    }
}

struct Active<'a> {
    h: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    lower: &'a DVector<f64>,
    upper: &'a DVector<f64>,
    tol: f64,
    max_iterations: usize,
}

struct ActiveOutcome {
    x: DVector<f64>,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    status: Status,
    iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Fix {
    Free,
    Lower,
    Upper,
}

impl Active<'_> {
    /// Primal active-set iterations from a feasible `x`; steps stay in the
    /// null space of `A` so equality feasibility is preserved.
    fn run(&self, mut x: DVector<f64>) -> ActiveOutcome {
        let n = x.len();
        let mut fix: Vec<Fix> = (0..n)
            .map(|i| {
                if x[i] <= self.lower[i] {
                    x[i] = self.lower[i];
                    Fix::Lower
                } else if x[i] >= self.upper[i] {
                    x[i] = self.upper[i];
                    Fix::Upper
                } else {
                    Fix::Free
                }
            })
            .collect();
        let m = self.a.nrows();
        for it in 0..self.max_iterations {
            let free: Vec<usize> = (0..n).filter(|&i| fix[i] == Fix::Free).collect();
            let g = self.h * &x + self.c;
            let hff = DMatrix::from_fn(free.len(), free.len(), |i, j| self.h[(free[i], free[j])]);
            let af = DMatrix::from_fn(m, free.len(), |i, j| self.a[(i, free[j])]);
            let gf = DVector::from_fn(free.len(), |i, _| g[free[i]]);
            let z = null_space(&af);
            let (step, ray) = match subproblem(&hff, &gf, &z, self.tol) {
                Step::Newton(p) => (p, false),
                Step::Ray(p) => (p, true),
            };
            let pnorm = inf_norm(&step);
            if !ray && pnorm <= self.tol * 1e-2 {
                // multipliers: free rows give λ, fixed rows give μ
                let (lambda, _) = least_squares(&af.transpose(), &(-&gf));
                let mut mu = &g + self.a.transpose() * &lambda;
                let mut worst: Option<(usize, f64)> = None;
                for i in 0..n {
                    let v = match fix[i] {
                        Fix::Free => {
                            mu[i] = 0.0;
                            continue;
                        }
                        Fix::Lower => -mu[i],
                        Fix::Upper => mu[i],
                    };
                    if self.lower[i] == self.upper[i] {
                        continue;
                    }
                    if v > self.tol && worst.is_none_or(|(_, w)| v > w) {
                        worst = Some((i, v));
                    }
                }
                match worst {
                    None => {
                        return ActiveOutcome {
                            x,
                            lambda,
                            mu,
                            status: Status::Optimal,
                            iterations: it + 1,
                        };
                    }
                    Some((i, _)) => {
                        fix[i] = Fix::Free;
                        continue;
                    }
                }
            }
            // ratio test
            let mut alpha = if ray { f64::INFINITY } else { 1.0 };
            let mut block = None;
            for (j, &i) in free.iter().enumerate() {
                let p = step[j];
                let limit = if p < 0.0 {
                    (self.lower[i] - x[i]) / p
                } else if p > 0.0 {
                    (self.upper[i] - x[i]) / p
                } else {
                    continue;
                };
                if limit < alpha {
                    alpha = limit.max(0.0);
                    block = Some((i, if p < 0.0 { Fix::Lower } else { Fix::Upper }));
                }
            }
            if !alpha.is_finite() {
                return ActiveOutcome {
                    x,
                    lambda: DVector::zeros(m),
                    mu: DVector::zeros(n),
                    status: Status::Unbounded,
                    iterations: it + 1,
                };
            }
            for (j, &i) in free.iter().enumerate() {
                x[i] += alpha * step[j];
            }
            if let Some((i, f)) = block {
                fix[i] = f;
                x[i] = if f == Fix::Lower {
                    self.lower[i]
                } else {
                    self.upper[i]
                };
            }
        }
        ActiveOutcome {
            x,
            lambda: DVector::zeros(m),
            mu: DVector::zeros(n),
            status: Status::MaxIterations,
            iterations: self.max_iterations,
        }
    }
}

/// Active-set solve of `min ½xᵀHx + cᵀx  s.t.  Ax = b, l ≤ x ≤ u`.
///
/// A feasible start comes from bound-constrained least squares on
/// `½‖Ax − b‖²`; a leftover residual means the problem is infeasible.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpResult, QpError> {
    check_dims(h, c, a, b)?;
    let n = c.len();
    if lower.len() != n || upper.len() != n {
        return Err(QpError::DimMismatch(format!(
            "bounds have {} and {}, n = {n}",
            lower.len(),
            upper.len()
        )));
    }
    if !(opts.tolerance > 0.0) {
        return Err(QpError::InvalidTolerance(opts.tolerance));
    }
    for i in 0..n {
        if !(lower[i] <= upper[i]) {
            return Err(QpError::InvalidBounds(i));
        }
    }
    if lower.iter().all(|v| *v == f64::NEG_INFINITY) && upper.iter().all(|v| *v == f64::INFINITY) {
        return solve_equality_qp(h, c, a, b, opts);
    }
    let tol = opts.tolerance * scale(c, b);
    let clip = |x: &DVector<f64>| DVector::from_fn(n, |i, _| x[i].clamp(lower[i], upper[i]));

    // phase 1: feasible point
    let (x_ls, _) = least_squares(a, b);
    let ata = a.transpose() * a;
    let atb = -(a.transpose() * b);
    let phase1 = Active {
        h: &ata,
        c: &atb,
        a: &DMatrix::zeros(0, n),
        lower,
        upper,
        tol: opts.tolerance * 1.0f64.max(inf_norm(&atb)),
        max_iterations: opts.max_iterations,
    }
    .run(clip(&x_ls));
    let mut x0 = phase1.x;
    let mut iterations = phase1.iterations;
    if inf_norm(&(a * &x0 - b)) > tol {
        // polish onto Ax = b on the free set before declaring infeasibility
        let free: Vec<usize> = (0..n)
            .filter(|&i| x0[i] > lower[i] && x0[i] < upper[i])
            .collect();
        let af = DMatrix::from_fn(a.nrows(), free.len(), |i, j| a[(i, free[j])]);
        let (d, _) = least_squares(&af, &(b - a * &x0));
        let mut polished = x0.clone();
        for (j, &i) in free.iter().enumerate() {
            polished[i] += d[j];
        }
        let within = (0..n).all(|i| polished[i] >= lower[i] - tol && polished[i] <= upper[i] + tol);
        if within && inf_norm(&(a * &polished - b)) <= tol {
            x0 = clip(&polished);
        } else {
            let lambda = DVector::zeros(b.len());
            let mu = DVector::zeros(n);
            let (s, p) = residuals(h, c, a, b, &x0, &lambda, &mu);
            return Ok(QpResult {
                x: x0,
                lambda,
                bound_multipliers: mu,
                status: Status::Infeasible,
                stationarity: s,
                primal: p,
                iterations,
            });
        }
    }

    // phase 2: optimality
    let out = Active {
        h,
        c,
        a,
        lower,
        upper,
        tol,
        max_iterations: opts.max_iterations,
    }
    .run(x0);
    iterations += out.iterations;
    let (s, p) = residuals(h, c, a, b, &out.x, &out.lambda, &out.mu);
    Ok(QpResult {
        x: out.x,
        lambda: out.lambda,
        bound_multipliers: out.mu,
        status: out.status,
        stationarity: s,
        primal: p,
        iterations,
    })
}
