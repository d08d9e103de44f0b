//! A small system-dynamics engine: stocks, flows, auxiliaries, exogenous
//! tracks, explicit Euler.
//!
//! This module deliberately shares no numerical code with the Petri-net or
//! QP paths; it is the independent oracle the HFGT engine is checked
//! against.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::expr::Expr;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("`{owner}` references unknown name `{name}`")]
    UnknownName { owner: String, name: String },
    #[error("flow `{flow}` endpoint `{endpoint}` is not a stock")]
    DanglingEndpoint { flow: String, endpoint: String },
    #[error("cyclic auxiliary definition through `{0}`")]
    CyclicAuxiliary(String),
    #[error("`{name}` is not finite at step {k}")]
    NonfiniteValue { name: String, k: usize },
    #[error("exogenous track `{name}` has {len} values, horizon needs {needed}")]
    ShortSeries {
        name: String,
        len: usize,
        needed: usize,
    },
    #[error("lookup `{0}` needs at least one point with strictly increasing inputs")]
    BadLookup(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stock {
    pub name: String,
    pub initial: f64,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Stock(String),
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub name: String,
    pub from: Endpoint,
    pub to: Endpoint,
    pub rate: Expr,
}

/// Piecewise-linear table, clamped beyond its first and last points.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub input: String,
    pub points: Vec<(f64, f64)>,
}

impl Lookup {
    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if x >= last.0 {
            return last.1;
        }
        let j = pts.partition_point(|p| p.0 <= x);
        let (x0, y0) = pts[j - 1];
        let (x1, y1) = pts[j];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuxDef {
    Expr(Expr),
    Lookup(Lookup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Auxiliary {
    pub name: String,
    pub def: AuxDef,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExoSource {
    Constant(f64),
    Series(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExoTrack {
    pub name: String,
    pub source: ExoSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockFlowModel {
    pub stocks: Vec<Stock>,
    pub flows: Vec<Flow>,
    pub auxiliaries: Vec<Auxiliary>,
    pub exogenous: Vec<ExoTrack>,
    pub dt: f64,
    pub horizon: usize,
}

/// A validated model with a fixed auxiliary evaluation order.
#[derive(Debug, Clone)]
pub struct CompiledModel<'a> {
    model: &'a StockFlowModel,
    aux_order: Vec<usize>,
    stock_slot: HashMap<&'a str, usize>,
}

impl StockFlowModel {
    /// Validates names, endpoints, references and auxiliary acyclicity.
    pub fn compile(&self) -> Result<CompiledModel<'_>, SdError> {
        if !(self.dt > 0.0) {
            return Err(SdError::NonPositiveStep(self.dt));
        }
        let mut seen = HashSet::new();
        let all_names = self
            .stocks
            .iter()
            .map(|s| &s.name)
            .chain(self.flows.iter().map(|f| &f.name))
            .chain(self.auxiliaries.iter().map(|a| &a.name))
            .chain(self.exogenous.iter().map(|e| &e.name));
        for n in all_names {
            if !seen.insert(n.as_str()) {
                return Err(SdError::DuplicateName(n.clone()));
            }
        }
        let stock_slot: HashMap<&str, usize> = self
            .stocks
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        let aux_slot: HashMap<&str, usize> = self
            .auxiliaries
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i))
            .collect();
        let exo: HashSet<&str> = self.exogenous.iter().map(|e| e.name.as_str()).collect();
        let readable =
            |n: &str| stock_slot.contains_key(n) || aux_slot.contains_key(n) || exo.contains(n);

        for f in &self.flows {
            for end in [&f.from, &f.to] {
                if let Endpoint::Stock(s) = end {
                    if !stock_slot.contains_key(s.as_str()) {
                        return Err(SdError::DanglingEndpoint {
                            flow: f.name.clone(),
                            endpoint: s.clone(),
                        });
                    }
                }
            }
            for r in f.rate.references() {
                if !readable(r) {
                    return Err(SdError::UnknownName {
                        owner: f.name.clone(),
                        name: r.to_string(),
                    });
                }
            }
        }

        let aux_deps: Vec<Vec<usize>> = self
            .auxiliaries
            .iter()
            .map(|a| {
                let refs: Vec<&str> = match &a.def {
                    AuxDef::Expr(e) => e.references(),
                    AuxDef::Lookup(l) => {
                        let ok =
                            !l.points.is_empty() && l.points.windows(2).all(|w| w[0].0 < w[1].0);
                        if !ok {
                            return Err(SdError::BadLookup(a.name.clone()));
                        }
                        vec![l.input.as_str()]
                    }
                };
                let mut deps = Vec::new();
                for r in refs {
                    if !readable(r) {
                        return Err(SdError::UnknownName {
                            owner: a.name.clone(),
                            name: r.to_string(),
                        });
                    }
                    if let Some(&j) = aux_slot.get(r) {
                        deps.push(j);
                    }
                }
                Ok(deps)
            })
            .collect::<Result<_, _>>()?;

        // depth-first topological order; declaration order breaks ties
        let mut order = Vec::with_capacity(aux_deps.len());
        let mut mark = vec![0u8; aux_deps.len()];
        fn visit(
            i: usize,
            deps: &[Vec<usize>],
            mark: &mut [u8],
            order: &mut Vec<usize>,
            names: &[Auxiliary],
        ) -> Result<(), SdError> {
            match mark[i] {
                2 => return Ok(()),
                1 => return Err(SdError::CyclicAuxiliary(names[i].name.clone())),
                _ => {}
            }
            mark[i] = 1;
            for &j in &deps[i] {
                visit(j, deps, mark, order, names)?;
            }
            mark[i] = 2;
            order.push(i);
            Ok(())
        }
        for i in 0..aux_deps.len() {
            visit(i, &aux_deps, &mut mark, &mut order, &self.auxiliaries)?;
        }

        for e in &self.exogenous {
            if let ExoSource::Series(v) = &e.source {
                if v.len() < self.horizon + 1 {
                    return Err(SdError::ShortSeries {
                        name: e.name.clone(),
                        len: v.len(),
                        needed: self.horizon + 1,
                    });
                }
            }
        }

        Ok(CompiledModel {
            model: self,
            aux_order: order,
            stock_slot,
        })
    }
}

/// Auxiliary values and flow rates evaluated at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRates {
    pub auxiliaries: Vec<f64>,
    pub flows: Vec<f64>,
}

impl CompiledModel<'_> {
    pub fn model(&self) -> &StockFlowModel {
        self.model
    }

    /// Evaluates auxiliaries (dependency order) then flow rates at step `k`.
    pub fn rates(&self, stocks: &[f64], k: usize) -> Result<StepRates, SdError> {
        let m = self.model;
        let mut env: HashMap<&str, f64> = HashMap::new();
        for (s, v) in m.stocks.iter().zip(stocks) {
            env.insert(&s.name, *v);
        }
        for e in &m.exogenous {
            let v = match &e.source {
                ExoSource::Constant(c) => *c,
                ExoSource::Series(xs) => xs[k],
            };
            env.insert(&e.name, v);
        }
        let mut aux = vec![0.0; m.auxiliaries.len()];
        for &i in &self.aux_order {
            let a = &m.auxiliaries[i];
            let v = match &a.def {
                AuxDef::Expr(e) => e.eval(&|n| env.get(n).copied()),
                AuxDef::Lookup(l) => Ok(l.eval(env[l.input.as_str()])),
            }
            .map_err(|err| SdError::UnknownName {
                owner: a.name.clone(),
                name: err.to_string(),
            })?;
            if !v.is_finite() {
                return Err(SdError::NonfiniteValue {
                    name: a.name.clone(),
                    k,
                });
            }
            aux[i] = v;
            env.insert(&a.name, v);
        }
        let flows =
            m.flows
                .iter()
                .map(|f| {
                    let v = f.rate.eval(&|n| env.get(n).copied()).map_err(|err| {
                        SdError::UnknownName {
                            owner: f.name.clone(),
                            name: err.to_string(),
                        }
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(SdError::NonfiniteValue {
                            name: f.name.clone(),
                            k,
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
        Ok(StepRates {
            auxiliaries: aux,
            flows,
        })
    }

    fn apply(&self, stocks: &[f64], flows: &[f64]) -> Vec<f64> {
        let m = self.model;
        let mut net = vec![0.0; stocks.len()];
        for (f, rate) in m.flows.iter().zip(flows) {
            if let Endpoint::Stock(s) = &f.from {
                net[self.stock_slot[s.as_str()]] -= rate;
            }
            if let Endpoint::Stock(s) = &f.to {
                net[self.stock_slot[s.as_str()]] += rate;
            }
        }
        stocks.iter().zip(&net).map(|(s, d)| s + d * m.dt).collect()
    }
}

/// Explicit Euler step: rates evaluated at step `k` advance stocks to `k + 1`.
pub fn sd_step(stocks: &[f64], model: &CompiledModel<'_>, k: usize) -> Result<Vec<f64>, SdError> {
    let rates = model.rates(stocks, k)?;
    let next = model.apply(stocks, &rates.flows);
    for (s, v) in model.model.stocks.iter().zip(&next) {
        if !v.is_finite() {
            return Err(SdError::NonfiniteValue {
                name: s.name.clone(),
                k: k + 1,
            });
        }
    }
    Ok(next)
}

/// Runs the full horizon.
///
/// Columns are stocks, then flows, then auxiliaries, each in declaration
/// order; rows run `k = 0..=K`.
pub fn run_sd(model: &StockFlowModel) -> Result<Trajectory, SdError> {
    let compiled = model.compile()?;
    let mut names: Vec<String> = model.stocks.iter().map(|s| s.name.clone()).collect();
    names.extend(model.flows.iter().map(|f| f.name.clone()));
    names.extend(model.auxiliaries.iter().map(|a| a.name.clone()));
    let mut traj = Trajectory::new(model.dt, names);

    let mut stocks: Vec<f64> = model.stocks.iter().map(|s| s.initial).collect();
    for k in 0..=model.horizon {
        let rates = compiled.rates(&stocks, k)?;
        let mut row = stocks.clone();
        row.extend(&rates.flows);
        row.extend(&rates.auxiliaries);
        traj.push_row(&row)
            .expect("row width fixed by construction");
        if k < model.horizon {
            stocks = compiled.apply(&stocks, &rates.flows);
            if let Some((s, _)) = model
                .stocks
                .iter()
                .zip(&stocks)
                .find(|(_, v)| !v.is_finite())
            {
                return Err(SdError::NonfiniteValue {
                    name: s.name.clone(),
                    k: k + 1,
                });
            }
        }
    }
    Ok(traj)
}
