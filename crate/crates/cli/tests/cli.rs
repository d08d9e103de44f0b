use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn hfgtflow(args: &[&str]) -> Output {
    hfgtflow_env(args, &[])
}

fn hfgtflow_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hfgtflow"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &Path) -> usize {
    std::fs::read_to_string(csv).unwrap().lines().count() - 1
}

fn column(csv: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let i = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == name)
        .unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().parse().unwrap())
        .collect()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_monolake_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let (model, exo) = (fixture("monolake.model"), fixture("monolake-exogenous.csv"));
    for engine in ["hfgt", "sd"] {
        let out = dir.path().join(format!("{engine}.csv"));
        let o = hfgtflow(&[
            "simulate",
            "--engine",
            engine,
            "--model",
            s(&model),
            "--exogenous",
            s(&exo),
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(data_rows(&out), 101);
    }
    let a = column(&dir.path().join("hfgt.csv"), "V_Mono");
    let b = column(&dir.path().join("sd.csv"), "V_Mono");
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-9 * y.abs());
    }
}

#[test]
fn horizon_zero_gives_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "hfgt",
        "--model",
        s(&fixture("monolake.model")),
        "--exogenous",
        s(&fixture("monolake-exogenous.csv")),
        "--horizon",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out), 1);
    assert_eq!(column(&out, "V_Mono"), [2228.0]);
}

#[test]
fn stockflow_documents_simulate_with_the_sd_engine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "sd",
        "--model",
        s(&fixture("monolake-sd.model")),
        "--exogenous",
        s(&fixture("monolake-exogenous.csv")),
        "--horizon",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out), 11);
}

#[test]
fn missing_exogenous_file_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "hfgt",
        "--model",
        s(&fixture("monolake.model")),
        "--exogenous",
        s(&dir.path().join("absent.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn malformed_documents_report_locations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(
        &bad,
        "{\n  \"kind\": \"hfnmcf-spec\",\n  \"version\": 1,\n  \"horizon\": -1,\n}",
    )
    .unwrap();
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "hfgt",
        "--model",
        s(&bad),
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.model:5:1"), "{err}");
}

#[test]
fn short_exogenous_series_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "hfgt",
        "--model",
        s(&fixture("monolake.model")),
        "--exogenous",
        s(&fixture("monolake-drought.csv")),
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn empty_lake_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("monolake.model")).unwrap();
    let text = text.replacen("\"value\": 2228", "\"value\": 0", 1);
    let model = dir.path().join("empty.model");
    std::fs::write(&model, text).unwrap();
    let o = hfgtflow(&[
        "simulate",
        "--engine",
        "hfgt",
        "--model",
        s(&model),
        "--exogenous",
        s(&fixture("monolake-exogenous.csv")),
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn compare_monolake_is_within_the_tight_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = hfgtflow(&[
        "compare",
        "--model",
        s(&fixture("monolake.model")),
        "--sd-model",
        s(&fixture("monolake-sd.model")),
        "--exogenous",
        s(&fixture("monolake-exogenous.csv")),
        "--horizon",
        "100",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["hfgt_mode"], "forward-propagate");
    let vars = r["variables"].as_array().unwrap();
    assert_eq!(vars.len(), 2);
    for v in vars {
        let e = v["nrmse_percent"].as_f64().unwrap();
        assert!((0.0..=1e-6).contains(&e), "{v}");
    }
    assert!(r["runtimes"]["sd_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn perturbed_percolation_fails_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = hfgtflow(&[
        "compare",
        "--model",
        s(&fixture("monolake.model")),
        "--sd-model",
        s(&fixture("monolake-sd-perturbed.model")),
        "--exogenous",
        s(&fixture("monolake-exogenous.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    let lake = r["variables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["name"] == "V_Mono")
        .unwrap();
    assert_eq!(lake["within_threshold"], false);
    assert!(stderr(&o).contains("V_Mono"));
}

#[test]
fn reports_are_reproducible_without_timings() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = hfgtflow(&[
            "compare",
            "--model",
            s(&fixture("monolake.model")),
            "--exogenous",
            s(&fixture("monolake-exogenous.csv")),
            "--no-timings",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    assert!(!String::from_utf8(a).unwrap().contains("runtimes"));
}

#[test]
fn flags_fall_back_to_environment_variables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = hfgtflow_env(
        &["simulate", "--engine", "hfgt"],
        &[
            ("HFGTFLOW_MODEL", s(&fixture("monolake.model"))),
            ("HFGTFLOW_EXOGENOUS", s(&fixture("monolake-exogenous.csv"))),
            ("HFGTFLOW_HORIZON", "5"),
            ("HFGTFLOW_OUT", s(&out)),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out), 6);
}

#[test]
fn toy_problem_solves_to_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = hfgtflow(&[
        "solve",
        "--problem",
        s(&fixture("toy-qp.model")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["status"], "optimal");
    assert_eq!(r["mode"], "kkt-direct");
    let t: Vec<f64> = r["variables"]["U-:transfer"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((t[0] - 6.0).abs() < 1e-10 && (t[1] - 6.0).abs() < 1e-10);
}

#[test]
fn forcing_forward_mode_on_an_optimization_problem_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let o = hfgtflow(&[
        "solve",
        "--problem",
        s(&fixture("toy-qp.model")),
        "--mode",
        "forward",
        "--out",
        s(&dir.path().join("s.json")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn single_state_spec_generates_a_constant_series() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.model");
    std::fs::write(
        &spec,
        r#"{"kind": "markov-spec", "version": 1,
            "tracks": [{"name": "precip_ft_yr", "states": [1.2], "transition": [[1]], "initial": 0}]}"#,
    )
    .unwrap();
    let out = dir.path().join("g.csv");
    let o = hfgtflow(&[
        "gen-exogenous",
        "--spec",
        s(&spec),
        "--seed",
        "9",
        "--steps",
        "12",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = column(&out, "precip_ft_yr");
    assert_eq!(v.len(), 13);
    assert!(v.iter().all(|&x| x == 1.2));
}

#[test]
fn generation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let spec = fixture("monolake.markov.model");
        let o = hfgtflow(&[
            "gen-exogenous",
            "--spec",
            s(&spec),
            "--seed",
            seed,
            "--steps",
            "50",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("3", "a.csv"), run("3", "b.csv"));
    assert_ne!(run("3", "a.csv"), run("4", "c.csv"));
}

#[test]
fn non_stochastic_spec_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.model");
    std::fs::write(
        &spec,
        r#"{"kind": "markov-spec", "version": 1,
            "tracks": [{"name": "x", "states": [1, 2], "transition": [[0.5, 0.6], [0, 1]]}]}"#,
    )
    .unwrap();
    let o = hfgtflow(&[
        "gen-exogenous",
        "--spec",
        s(&spec),
        "--seed",
        "1",
        "--steps",
        "3",
        "--out",
        s(&dir.path().join("g.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_draws_one_polyline_per_variable() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    std::fs::write(&traj, "k,a,b,c\n0,1,2,3\n1,2,1,3\n2,3,0,3\n").unwrap();
    let out = dir.path().join("p.svg");
    let o = hfgtflow(&[
        "plot",
        "--traj",
        s(&traj),
        "--vars",
        "a,b",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);

    let o = hfgtflow(&[
        "plot",
        "--traj",
        s(&traj),
        "--vars",
        "a,zz",
        "--out",
        s(&dir.path().join("q.svg")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("zz"));
}

#[test]
fn cold_climate_warns_about_reverse_evaporation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cold.csv");
    let mut text = String::from("k,precip_ft_yr,temp,sgr_kaf_yr\n");
    for k in 0..=5 {
        text += &format!("{k},1.0,0,100\n");
    }
    std::fs::write(&csv, text).unwrap();
    for engine in ["sd", "hfgt"] {
        let model = if engine == "sd" {
            "monolake-sd.model"
        } else {
            "monolake.model"
        };
        let o = hfgtflow(&[
            "simulate",
            "--engine",
            engine,
            "--model",
            s(&fixture(model)),
            "--exogenous",
            s(&csv),
            "--horizon",
            "5",
            "--out",
            s(&dir.path().join("t.csv")),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(
            stderr(&o).contains("warning: `lambda_Evap` is negative at step 0"),
            "{engine}: {}",
            stderr(&o)
        );
    }
}
