//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export returns a JSON string; failures become JS exceptions.
//! The plain `*_json` functions hold the logic so they can be tested natively.

use hfgtflow::compare::nrmse;
use hfgtflow::hfnmcf::assemble;
use hfgtflow::incidence::incidence_of;
use hfgtflow::markov::{gen_exogenous, MarkovSpec, MarkovTrack};
use hfgtflow::monolake::{
    self, build_monolake, ExogenousSeries, MonoParams, AQUIFER, LAKE, PRECIP, SGR, TEMP,
};
use hfgtflow::plot::{line_chart, plot_trajectory};
use hfgtflow::qp::{solve, SolveOptions};
use hfgtflow::sd::run_sd;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn regime() -> MarkovSpec {
    let track = |name: &str, states: [f64; 3]| MarkovTrack {
        name: name.into(),
        states: states.to_vec(),
        transition: vec![
            vec![0.6, 0.3, 0.1],
            vec![0.25, 0.5, 0.25],
            vec![0.1, 0.3, 0.6],
        ],
        initial: 1,
    };
    MarkovSpec {
        tracks: vec![
            track(PRECIP, [0.8, 1.2, 1.6]),
            track(TEMP, [16.0, 18.0, 20.0]),
            track(SGR, [80.0, 110.0, 140.0]),
        ],
    }
}

/// Runs both engines on a seeded synthetic climate and reports their
/// agreement.
pub fn simulate_monolake_json(
    horizon: usize,
    seed: u64,
    gw_with: f64,
    lambda_perc: f64,
) -> Result<String, String> {
    if horizon == 0 || horizon > 1000 {
        return Err(format!("horizon must be in 1..=1000, got {horizon}"));
    }
    let p = MonoParams {
        gw_with,
        lambda_perc,
        ..MonoParams::default()
    };
    let table = gen_exogenous(&regime(), seed, horizon).map_err(|e| e.to_string())?;
    let exo = ExogenousSeries::from_table(&table).map_err(|e| e.to_string())?;
    let (model, spec, sd) = build_monolake(&p, &exo, horizon).map_err(|e| e.to_string())?;
    let problem = assemble(&model, &spec).map_err(|e| e.to_string())?;
    let sol = solve(&problem, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let hfgt = problem.trajectory(&sol.x, &sol.y);
    let oracle = run_sd(&sd).map_err(|e| e.to_string())?;

    let mut out = serde_json::Map::new();
    for var in [LAKE, AQUIFER] {
        let (a, b) = (hfgt.column(var).ok_or(var)?, oracle.column(var).ok_or(var)?);
        out.insert(
            var.into(),
            json!({ "hfgt": a, "sd": b, "nrmse_percent": nrmse(a, b) }),
        );
    }
    let svg = plot_trajectory(&hfgt, &[LAKE, AQUIFER], "HFGT volumes (KAF)")?;
    let sd_svg = plot_trajectory(&oracle, &[LAKE, AQUIFER], "Stock-flow volumes (KAF)")?;
    Ok(json!({
        "mode": format!("{:?}", sol.mode),
        "variables": out,
        "svg": svg,
        "sd_svg": sd_svg,
        "exogenous": { PRECIP: table.column(PRECIP), TEMP: table.column(TEMP), SGR: table.column(SGR) },
    })
    .to_string())
}

/// Mono Lake `M⁺`, `M⁻` and `M` with their row and column labels.
pub fn incidence_matrices_json() -> Result<String, String> {
    let model = monolake::system_model().map_err(|e| e.to_string())?;
    let inc = incidence_of(&model);
    let places: Vec<String> = (0..model.num_places())
        .map(|i| model.place_label(i))
        .collect();
    let caps: Vec<&str> = model.capabilities().iter().map(|c| c.id.as_str()).collect();
    Ok(json!({
        "places": places,
        "capabilities": caps,
        "m_plus": inc.m_plus.to_dense(),
        "m_minus": inc.m_minus.to_dense(),
        "m": inc.m.to_dense(),
    })
    .to_string())
}

/// Evaporation flow over `n` lake volumes between `v_min` and `v_max`.
pub fn evaporation_curve_json(
    temp: f64,
    v_min: f64,
    v_max: f64,
    n: usize,
) -> Result<String, String> {
    if !(v_min > 0.0 && v_max > v_min) || n < 2 {
        return Err("need 0 < v_min < v_max and at least 2 points".into());
    }
    let p = MonoParams::default();
    let volumes: Vec<f64> = (0..n)
        .map(|i| v_min + (v_max - v_min) * i as f64 / (n - 1) as f64)
        .collect();
    let evap = volumes
        .iter()
        .map(|&v| p.flows(v, 0.0, temp, p.v_la).map(|f| f[2]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let title = format!("V_Evap (KAF/yr) for V_Mono {v_min}..{v_max} KAF at {temp} C");
    Ok(json!({ "volumes": volumes, "evaporation": evap, "svg": line_chart(&title, &[("V_Evap", &evap)]) }).to_string())
}

#[wasm_bindgen]
pub fn simulate_monolake(
    horizon: usize,
    seed: u32,
    gw_with: f64,
    lambda_perc: f64,
) -> Result<String, JsError> {
    simulate_monolake_json(horizon, seed.into(), gw_with, lambda_perc).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn incidence_matrices() -> Result<String, JsError> {
    incidence_matrices_json().map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn evaporation_curve(temp: f64, v_min: f64, v_max: f64, n: usize) -> Result<String, JsError> {
    evaporation_curve_json(temp, v_min, v_max, n).map_err(|e| JsError::new(&e))
}
