//! Running documents through either engine.
//!
//! Errors split into [`RunError::Invalid`] (the inputs are wrong) and
//! [`RunError::Numerical`] (valid inputs, failed arithmetic) so callers can
//! map them to distinct exit codes.

use thiserror::Error;

use crate::compare::{compare_trajectories, VariableComparison};
use crate::hfnmcf::{assemble, HfnmcfProblem};
use crate::io::{Body, ModelDocument, SpecDoc};
use crate::monolake::{self, ExogenousSeries, MonoParams};
use crate::qp::{solve, Solution, SolveError, SolveOptions, Status};
use crate::sd::{run_sd, ExoSource, SdError, StockFlowModel};
use crate::series::SeriesTable;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NonfiniteState { .. } | SolveError::Qp(_) | SolveError::Net(_) => {
                RunError::Numerical(e.to_string())
            }
            _ => RunError::Invalid(e.to_string()),
        }
    }
}

impl From<SdError> for RunError {
    fn from(e: SdError) -> Self {
        match e {
            SdError::NonfiniteValue { .. } => RunError::Numerical(e.to_string()),
            _ => RunError::Invalid(e.to_string()),
        }
    }
}

/// Result of the HFGT engine.
pub struct HfgtRun {
    pub problem: HfnmcfProblem,
    pub solution: Solution,
    pub trajectory: Trajectory,
}

pub fn run_hfgt(
    doc: &SpecDoc,
    exogenous: Option<&SeriesTable>,
    horizon: Option<usize>,
    opts: &SolveOptions,
) -> Result<HfgtRun, RunError> {
    let (model, spec) = doc.build(exogenous, horizon).map_err(RunError::Invalid)?;
    let problem = assemble(&model, &spec).map_err(|e| RunError::Invalid(e.to_string()))?;
    let solution = solve(&problem, opts)?;
    if solution.status != Status::Optimal {
        return Err(RunError::Numerical(format!(
            "solver finished with status {:?}",
            solution.status
        )));
    }
    let trajectory = problem.trajectory(&solution.x, &solution.y);
    Ok(HfgtRun {
        problem,
        solution,
        trajectory,
    })
}

/// A stock-flow model with series tracks replaced by same-named table
/// columns and the horizon overridden.
pub fn with_inputs(
    model: &StockFlowModel,
    exogenous: Option<&SeriesTable>,
    horizon: Option<usize>,
) -> StockFlowModel {
    let mut m = model.clone();
    if let Some(h) = horizon {
        m.horizon = h;
    }
    if let Some(t) = exogenous {
        for track in &mut m.exogenous {
            if let Some(col) = t.column(&track.name) {
                track.source = ExoSource::Series(col.to_vec());
            }
        }
    }
    m
}

/// The stock-flow twin of a spec, when its device-model set has one.
pub fn derived_stockflow(
    doc: &SpecDoc,
    exogenous: Option<&SeriesTable>,
    horizon: Option<usize>,
) -> Result<StockFlowModel, RunError> {
    if doc.devices.set != "monolake" {
        return Err(RunError::Invalid(format!(
            "device-model set `{}` has no stock-flow form; pass a stockflow model",
            doc.devices.set
        )));
    }
    let p =
        MonoParams::from_map(&doc.devices.params).map_err(|e| RunError::Invalid(e.to_string()))?;
    let mut tracks: Vec<(String, Vec<f64>)> = doc.exogenous.clone();
    if let Some(t) = exogenous {
        for name in t.names() {
            let col = t.column(name).expect("listed").to_vec();
            match tracks.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = col,
                None => tracks.push((name.clone(), col)),
            }
        }
    }
    let (names, cols) = tracks.into_iter().unzip();
    let exo = ExogenousSeries::from_table(&SeriesTable::new(names, cols))
        .map_err(|e| RunError::Invalid(format!("{e}; supply --exogenous")))?;
    monolake::stock_flow_model(&p, &exo, horizon.unwrap_or(doc.horizon))
        .map_err(|e| RunError::Invalid(e.to_string()))
}

/// Runs the stock-flow engine on a stockflow document, or on the twin of
/// an `hfnmcf-spec` document.
pub fn run_stockflow(
    doc: &ModelDocument,
    exogenous: Option<&SeriesTable>,
    horizon: Option<usize>,
) -> Result<Trajectory, RunError> {
    let model = match &doc.body {
        Body::StockFlow(m) => with_inputs(m, exogenous, horizon),
        Body::HfnmcfSpec(s) => derived_stockflow(s, exogenous, horizon)?,
        _ => {
            return Err(RunError::Invalid(format!(
                "a `{}` document cannot be simulated",
                doc.kind().as_str()
            )))
        }
    };
    Ok(run_sd(&model)?)
}

/// State variables both trajectories carry: the spec's place names.
pub fn tracked_variables(problem: &HfnmcfProblem, oracle: &Trajectory) -> Vec<String> {
    let places = problem.incidence.num_places();
    problem.var_names[..places]
        .iter()
        .filter(|n| oracle.column(n).is_some())
        .cloned()
        .collect()
}

pub fn compare_runs(
    candidate: &Trajectory,
    oracle: &Trajectory,
    vars: &[String],
) -> Result<Vec<VariableComparison>, RunError> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    compare_trajectories(candidate, oracle, &names, 1e-9)
        .ok_or_else(|| RunError::Invalid("trajectories differ in length or variables".into()))
}

/// Conditions the engines let through but a user should hear about: negative
/// stocks and a negative evaporation rate (`lambda_Evap`, for cold inputs).
pub fn trajectory_warnings(traj: &Trajectory, stocks: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let first_negative = |name: &str| {
        traj.column(name)
            .and_then(|c| c.iter().position(|&v| v < 0.0))
    };
    for s in stocks {
        if let Some(k) = first_negative(s) {
            out.push(format!("`{s}` is negative from step {k}"));
        }
    }
    if let Some(k) = first_negative("lambda_Evap") {
        out.push(format!(
            "`lambda_Evap` is negative at step {k}; evaporation runs in reverse"
        ));
    }
    out
}

/// State variables of a document: stocks, or the places of a spec.
pub fn stock_names(doc: &ModelDocument) -> Vec<String> {
    match &doc.body {
        Body::StockFlow(m) => m.stocks.iter().map(|s| s.name.clone()).collect(),
        Body::HfnmcfSpec(s) => s.place_names.clone().unwrap_or_else(|| {
            s.system
                .to_model()
                .map(|m| (0..m.num_places()).map(|i| m.place_label(i)).collect())
                .unwrap_or_default()
        }),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_stock_is_reported_once() {
        let t = Trajectory::from_columns(
            1.0,
            vec!["S".into(), "lambda_Evap".into()],
            vec![vec![1.0, -1.0, -2.0], vec![0.5; 3]],
        );
        assert_eq!(
            trajectory_warnings(&t, &["S".into()]),
            vec!["`S` is negative from step 1".to_string()]
        );
    }
}
