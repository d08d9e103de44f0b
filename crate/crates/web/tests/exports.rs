use hfgtflow_web::{evaporation_curve_json, incidence_matrices_json, simulate_monolake_json};
use serde_json::Value;

#[test]
fn simulation_engines_agree() {
    let v: Value =
        serde_json::from_str(&simulate_monolake_json(40, 42, 6.8, 0.01).unwrap()).unwrap();
    for var in ["V_Mono", "V_Aqui"] {
        let e = v["variables"][var]["nrmse_percent"].as_f64().unwrap();
        assert!(e <= 1e-6, "{var}: {e}");
        assert_eq!(v["variables"][var]["hfgt"].as_array().unwrap().len(), 41);
    }
    assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
}

#[test]
fn simulation_rejects_empty_horizon() {
    assert!(simulate_monolake_json(0, 1, 6.8, 0.01).is_err());
}

#[test]
fn incidence_is_the_mono_lake_matrix() {
    let v: Value = serde_json::from_str(&incidence_matrices_json().unwrap()).unwrap();
    let m: Vec<Vec<f64>> = serde_json::from_value(v["m"].clone()).unwrap();
    assert_eq!(
        m,
        vec![
            vec![1.0, 1.0, -1.0, 0.0, -1.0, 1.0],
            vec![0.0, 0.0, 0.0, -1.0, 1.0, -1.0]
        ]
    );
    assert_eq!(v["capabilities"].as_array().unwrap().len(), 6);
}

#[test]
fn evaporation_grows_with_volume() {
    let v: Value =
        serde_json::from_str(&evaporation_curve_json(18.0, 1000.0, 4000.0, 16).unwrap()).unwrap();
    let e: Vec<f64> = serde_json::from_value(v["evaporation"].clone()).unwrap();
    assert_eq!(e.len(), 16);
    assert!(e.windows(2).all(|w| w[1] > w[0]));
    assert!(evaporation_curve_json(18.0, 10.0, 5.0, 4).is_err());
}
