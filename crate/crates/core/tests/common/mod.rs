//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hfgtflow::nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `min Σ F_i x_i² + f·x  s.t.  A x = b`, generated so that `x = [y; z]`
/// with `z = z0 − B y` before the rows of `[B | I]` are mixed by `M`.
pub struct EqualityQp {
    pub f_diag: Vec<f64>,
    pub f_lin: Vec<f64>,
    pub b_block: DMatrix<f64>,
    pub z0: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl EqualityQp {
    pub fn free(&self) -> usize {
        self.b_block.ncols()
    }

    /// Solver form `½ xᵀHx + cᵀx`.
    pub fn h(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.f_diag.len(),
            self.f_diag.iter().map(|v| 2.0 * v),
        ))
    }

    pub fn c(&self) -> DVector<f64> {
        DVector::from_vec(self.f_lin.clone())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.f_diag)
            .zip(&self.f_lin)
            .map(|((x, q), l)| q * x * x + l * x)
            .sum()
    }

    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let z = &self.z0 - &self.b_block * &y;
        y.iter().chain(z.iter()).copied().collect()
    }
}

fn reduced_hessian_min_eig(f_diag: &[f64], b_block: &DMatrix<f64>) -> f64 {
    let (m, d) = b_block.shape();
    let mut z = DMatrix::zeros(d + m, d);
    for i in 0..d {
        z[(i, i)] = 1.0;
    }
    for r in 0..m {
        for c in 0..d {
            z[(d + r, c)] = -b_block[(r, c)];
        }
    }
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(f_diag));
    let red = z.transpose() * h * z;
    red.symmetric_eigen().eigenvalues.min()
}

/// Random PSD equality QP with at most 8 variables, 4 rows and 5 free
/// directions, positive definite on the null space of `A`.
pub fn random_equality_qp(r: &mut ChaCha8Rng) -> EqualityQp {
    loop {
        let m = r.random_range(1..=4);
        let d = r.random_range(1..=(8 - m).min(5));
        let n = m + d;
        let f_diag: Vec<f64> = (0..n)
            .map(|_| {
                if r.random_bool(0.2) {
                    0.0
                } else {
                    r.random_range(0.1..2.0)
                }
            })
            .collect();
        let b_block = DMatrix::from_fn(m, d, |_, _| r.random_range(-1.5..1.5));
        if reduced_hessian_min_eig(&f_diag, &b_block) < 0.05 {
            continue;
        }
        let f_lin = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let z0 = DVector::from_fn(m, |_, _| r.random_range(-2.0..2.0));
        let mut structured = DMatrix::zeros(m, n);
        structured.view_mut((0, 0), (m, d)).copy_from(&b_block);
        for i in 0..m {
            structured[(i, d + i)] = 1.0;
        }
        // well-conditioned row mixing hides the structure from the solver
        let mix = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                2.0
            } else {
                r.random_range(-0.5..0.5)
            }
        });
        let a = &mix * structured;
        let b = &mix * &z0;
        return EqualityQp {
            f_diag,
            f_lin,
            b_block,
            z0,
            a,
            b,
        };
    }
}

/// Brute-force lattice descent over the free coordinates: from each lattice
/// point try all `3^d` neighbours, halving the spacing when none improves.
pub fn lattice_min(
    f: impl Fn(&[f64]) -> Option<f64>,
    start: Vec<f64>,
    h0: f64,
    h_min: f64,
) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut best = start;
    let mut best_v = f(&best).expect("feasible start");
    let mut h = h0;
    let neighbours = 3usize.pow(d as u32);
    while h >= h_min {
        let mut improved = false;
        for code in 0..neighbours {
            let mut c = code;
            let mut p = best.clone();
            for v in p.iter_mut() {
                *v += h * ((c % 3) as f64 - 1.0);
                c /= 3;
            }
            if let Some(v) = f(&p) {
                if v < best_v {
                    best_v = v;
                    best = p;
                    improved = true;
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    (best, best_v)
}

pub fn equality_lattice_min(qp: &EqualityQp) -> f64 {
    lattice_min(
        |y| Some(qp.objective(&qp.expand(y))),
        vec![0.0; qp.free()],
        1.0,
        1e-7,
    )
    .1
}

/// Box problem on `[0, 1]^n` with two equality rows `[B | I] x = b`.
pub struct BoxQp {
    pub eq: EqualityQp,
}

pub fn random_box_qp(r: &mut ChaCha8Rng) -> BoxQp {
    let (m, d) = (2, 4);
    let n = m + d;
    let f_diag = (0..n)
        .map(|_| {
            if r.random_bool(0.2) {
                0.0
            } else {
                r.random_range(0.1..2.0)
            }
        })
        .collect();
    let f_lin = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let b_block = DMatrix::from_fn(m, d, |_, _| r.random_range(-0.5..0.5));
    // an interior point keeps the feasible set full-dimensional
    let y0 = DVector::from_fn(d, |_, _| r.random_range(0.3..0.7));
    let zi = DVector::from_fn(m, |_, _| r.random_range(0.3..0.7));
    let z0 = &zi + &b_block * &y0;
    let mut a = DMatrix::zeros(m, n);
    a.view_mut((0, 0), (m, d)).copy_from(&b_block);
    for i in 0..m {
        a[(i, d + i)] = 1.0;
    }
    let b = z0.clone();
    BoxQp {
        eq: EqualityQp {
            f_diag,
            f_lin,
            b_block,
            z0,
            a,
            b,
        },
    }
}

/// Full scan of the `0.05` lattice on the free coordinates, then local
/// lattice refinement from the best feasible point.
pub fn box_lattice_min(qp: &BoxQp) -> f64 {
    let eq = &qp.eq;
    let d = eq.free();
    let feasible = |y: &[f64]| {
        let x = eq.expand(y);
        x.iter()
            .all(|v| (-1e-12..=1.0 + 1e-12).contains(v))
            .then(|| eq.objective(&x))
    };
    let steps = 21usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..steps.pow(d as u32) {
        let mut c = code;
        let y: Vec<f64> = (0..d)
            .map(|_| {
                let v = (c % steps) as f64 * 0.05;
                c /= steps;
                v
            })
            .collect();
        if let Some(v) = feasible(&y) {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((y, v));
            }
        }
    }
    let (start, _) = best.expect("lattice meets the feasible set");
    lattice_min(feasible, start, 0.025, 1e-7).1
}

/// Exact minimum over all `3^n` active sets: each variable is free, at 0 or
/// at 1; the free part is solved through its own KKT system and kept only
/// if it lands inside the box.
pub fn box_active_set_min(qp: &BoxQp) -> f64 {
    let eq = &qp.eq;
    let n = eq.f_diag.len();
    let m = eq.a.nrows();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let state: Vec<usize> = (0..n)
            .map(|_| {
                let s = c % 3;
                c /= 3;
                s
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut x = vec![0.0; n];
        for i in 0..n {
            if state[i] == 2 {
                x[i] = 1.0;
            }
        }
        let fixed = DVector::from_column_slice(&x);
        let rhs_b = &eq.b - &eq.a * &fixed;
        let nf = free.len();
        let mut kkt = DMatrix::zeros(nf + m, nf + m);
        let mut rhs = DVector::zeros(nf + m);
        for (p, &i) in free.iter().enumerate() {
            kkt[(p, p)] = 2.0 * eq.f_diag[i];
            rhs[p] = -eq.f_lin[i];
            for r in 0..m {
                kkt[(p, nf + r)] = eq.a[(r, i)];
                kkt[(nf + r, p)] = eq.a[(r, i)];
            }
        }
        for r in 0..m {
            rhs[nf + r] = rhs_b[r];
        }
        let Some(sol) = kkt.clone().full_piv_lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        for (p, &i) in free.iter().enumerate() {
            x[i] = sol[p];
        }
        let xv = DVector::from_column_slice(&x);
        if x.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v))
            && (&eq.a * &xv - &eq.b).amax() <= 1e-9
        {
            best = best.min(eq.objective(&x));
        }
    }
    best
}

/// Elementary net with integer weights, for token-level simulation.
#[derive(Debug, Clone)]
pub struct TokenNet {
    pub m_plus: Vec<Vec<u32>>,
    pub m_minus: Vec<Vec<u32>>,
}

impl TokenNet {
    pub fn places(&self) -> usize {
        self.m_plus.len()
    }

    pub fn transitions(&self) -> usize {
        self.m_plus[0].len()
    }

    pub fn dense(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let f = |m: &Vec<Vec<u32>>| {
            m.iter()
                .map(|r| r.iter().map(|&v| v as f64).collect())
                .collect()
        };
        (f(&self.m_plus), f(&self.m_minus))
    }
}

pub fn random_net(r: &mut ChaCha8Rng) -> TokenNet {
    let p = r.random_range(1..=5);
    let t = r.random_range(1..=4);
    let mut w = || {
        (0..p)
            .map(|_| {
                (0..t)
                    .map(|_| {
                        if r.random_bool(0.5) {
                            r.random_range(1..=3)
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect()
    };
    TokenNet {
        m_plus: w(),
        m_minus: w(),
    }
}

/// Moves tokens one at a time: each starting firing removes its input
/// tokens and adds one in-flight token; each completing firing removes the
/// in-flight token and deposits its outputs.
pub fn push_tokens(
    net: &TokenNet,
    marking: &[i64],
    in_flight: &[i64],
    u_minus: &[u32],
    u_plus: &[u32],
) -> (Vec<i64>, Vec<i64>) {
    let mut q = marking.to_vec();
    let mut e = in_flight.to_vec();
    for t in 0..net.transitions() {
        for _ in 0..u_minus[t] {
            for (p, q) in q.iter_mut().enumerate() {
                for _ in 0..net.m_minus[p][t] {
                    *q -= 1;
                }
            }
            e[t] += 1;
        }
        for _ in 0..u_plus[t] {
            for (p, q) in q.iter_mut().enumerate() {
                for _ in 0..net.m_plus[p][t] {
                    *q += 1;
                }
            }
            e[t] -= 1;
        }
    }
    (q, e)
}

/// Impulse schedule: one firing per transition started at a random step and
/// completed exactly `k_d` steps later when that lands inside the horizon.
pub fn impulse_schedule(
    r: &mut ChaCha8Rng,
    horizon: usize,
    durations: &[usize],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = durations.len();
    let mut u_minus = vec![vec![0.0; n]; horizon];
    let mut u_plus = vec![vec![0.0; n]; horizon];
    for (psi, &kd) in durations.iter().enumerate() {
        let k0 = r.random_range(0..horizon);
        let a = r.random_range(1..=9) as f64;
        u_minus[k0][psi] = a;
        if k0 + kd < horizon {
            u_plus[k0 + kd][psi] = a;
        }
    }
    (u_minus, u_plus)
}

/// Every entry tied by a duration constraint: `(is_plus, step, transition)`.
pub fn constrained_entries(horizon: usize, durations: &[usize]) -> Vec<(bool, usize, usize)> {
    let mut out = Vec::new();
    for (psi, &kd) in durations.iter().enumerate() {
        for k in 0..horizon.saturating_sub(kd) {
            out.push((false, k, psi));
            out.push((true, k + kd, psi));
        }
    }
    out
}

pub mod docs {
    use hfgtflow::expr::{BinOp, Expr};
    use hfgtflow::io::{Body, ModelDocument, SystemDoc};
    use hfgtflow::markov::{MarkovSpec, MarkovTrack};
    use hfgtflow::sd::{
        AuxDef, Auxiliary, Endpoint, ExoSource, ExoTrack, Flow, Lookup, Stock, StockFlowModel,
    };
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn literal(r: &mut ChaCha8Rng) -> f64 {
        match r.random_range(0..3) {
            0 => r.random_range(0..100) as f64,
            1 => r.random_range(0.0..10.0),
            _ => r.random_range(1e-4..1e-2),
        }
    }

    pub fn expr(r: &mut ChaCha8Rng, names: &[String], depth: u32) -> Expr {
        let leaf = depth == 0 || r.random_bool(0.3);
        if leaf {
            return if names.is_empty() || r.random_bool(0.4) {
                Expr::num(literal(r))
            } else {
                Expr::name(names[r.random_range(0..names.len())].clone())
            };
        }
        match r.random_range(0..5) {
            0 => Expr::Neg(Box::new(expr(r, names, depth - 1))),
            1 => Expr::bin(
                BinOp::Add,
                expr(r, names, depth - 1),
                expr(r, names, depth - 1),
            ),
            2 => Expr::bin(
                BinOp::Sub,
                expr(r, names, depth - 1),
                expr(r, names, depth - 1),
            ),
            3 => Expr::bin(
                BinOp::Mul,
                expr(r, names, depth - 1),
                expr(r, names, depth - 1),
            ),
            // literal denominators keep validation away from division by zero
            _ => Expr::bin(
                BinOp::Div,
                expr(r, names, depth - 1),
                Expr::num(literal(r) + 1.0),
            ),
        }
    }

    pub fn stock_flow(r: &mut ChaCha8Rng) -> StockFlowModel {
        let stocks: Vec<Stock> = (0..r.random_range(1..=3))
            .map(|i| Stock {
                name: format!("S{i}"),
                initial: literal(r),
                units: ["", "kaf", "m3"][i % 3].into(),
            })
            .collect();
        let exogenous: Vec<ExoTrack> = (0..r.random_range(0..=2))
            .map(|i| ExoTrack {
                name: format!("x{i}"),
                source: if r.random_bool(0.5) {
                    ExoSource::Constant(literal(r))
                } else {
                    ExoSource::Series(Vec::new())
                },
            })
            .collect();
        let mut names: Vec<String> = stocks
            .iter()
            .map(|s| s.name.clone())
            .chain(exogenous.iter().map(|e| e.name.clone()))
            .collect();
        let mut auxiliaries = Vec::new();
        for i in 0..r.random_range(0..=3) {
            let def = if r.random_bool(0.25) {
                let mut x = 0.0;
                let points = (0..r.random_range(2..=4))
                    .map(|_| {
                        x += r.random_range(0.5..5.0);
                        (x, literal(r))
                    })
                    .collect();
                AuxDef::Lookup(Lookup {
                    input: names[r.random_range(0..names.len())].clone(),
                    points,
                })
            } else {
                AuxDef::Expr(expr(r, &names, 3))
            };
            let name = format!("a{i}");
            auxiliaries.push(Auxiliary {
                name: name.clone(),
                def,
            });
            names.push(name);
        }
        let endpoint = |r: &mut ChaCha8Rng| {
            if r.random_bool(0.3) {
                Endpoint::Boundary
            } else {
                Endpoint::Stock(stocks[r.random_range(0..stocks.len())].name.clone())
            }
        };
        let flows = (0..r.random_range(1..=4))
            .map(|i| Flow {
                name: format!("f{i}"),
                from: endpoint(r),
                to: endpoint(r),
                rate: expr(r, &names, 3),
            })
            .collect();
        StockFlowModel {
            stocks,
            flows,
            auxiliaries,
            exogenous,
            dt: [1.0, 0.5, 0.25][r.random_range(0..3)],
            horizon: r.random_range(0..50),
        }
    }

    pub fn markov(r: &mut ChaCha8Rng) -> MarkovSpec {
        let tracks = (0..r.random_range(1..=3))
            .map(|i| {
                let n = r.random_range(1..=4);
                let transition = (0..n)
                    .map(|_| {
                        // dyadic weights sum to exactly one
                        let mut left = 16u32;
                        let mut row = vec![0.0; n];
                        for (j, w) in row.iter_mut().enumerate() {
                            let take = if j + 1 == n {
                                left
                            } else {
                                r.random_range(0..=left)
                            };
                            left -= take;
                            *w = take as f64 / 16.0;
                        }
                        row
                    })
                    .collect();
                MarkovTrack {
                    name: format!("t{i}"),
                    states: (0..n).map(|_| literal(r)).collect(),
                    transition,
                    initial: r.random_range(0..n),
                }
            })
            .collect();
        MarkovSpec { tracks }
    }

    /// Mono Lake topology with random display names and durations.
    pub fn system(r: &mut ChaCha8Rng) -> SystemDoc {
        let mut doc = SystemDoc::from_model(&hfgtflow::monolake::system_model().unwrap());
        let names = [
            "plain",
            "with \"quotes\"",
            "back\\slash",
            "tab\there",
            "unicode λ ψ",
            "line\nbreak",
        ];
        for p in &mut doc.processes {
            p.name = names[r.random_range(0..names.len())].into();
        }
        for c in &mut doc.capabilities {
            c.duration = r.random_range(0..4);
        }
        doc
    }

    pub fn document(r: &mut ChaCha8Rng) -> ModelDocument {
        let body = match r.random_range(0..4) {
            0 => Body::MarkovSpec(markov(r)),
            3 => Body::HfgtSystem(system(r)),
            1 => {
                let p = hfgtflow::monolake::MonoParams {
                    gw_with: literal(r),
                    lambda_perc: r.random_range(0.0..0.05),
                    ..Default::default()
                };
                return hfgtflow::io::monolake_document(&p, r.random_range(1..200));
            }
            _ => Body::StockFlow(stock_flow(r)),
        };
        ModelDocument::new(body)
    }
}
