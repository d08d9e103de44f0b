//! Shipped fixtures are generator output; `BLESS=1 cargo test` rewrites them.

use std::path::PathBuf;

use hfgtflow::io::{
    monolake_document, parse, serialize, Body, DocumentKind, ModelDocument, ParseMode,
};
use hfgtflow::markov::{gen_exogenous, MarkovSpec, MarkovTrack};
use hfgtflow::monolake::{
    stock_flow_model, ExogenousSeries, MonoParams, PRECIP, SERIES_SCHEMA, SGR, TEMP,
};
use hfgtflow::sd::ExoSource;
use hfgtflow::series::load_series;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn track(name: &str, states: [f64; 3]) -> MarkovTrack {
    MarkovTrack {
        name: name.into(),
        states: states.to_vec(),
        transition: vec![
            vec![0.6, 0.3, 0.1],
            vec![0.25, 0.5, 0.25],
            vec![0.1, 0.3, 0.6],
        ],
        initial: 1,
    }
}

fn main_regime() -> MarkovSpec {
    MarkovSpec {
        tracks: vec![
            track(PRECIP, [0.8, 1.2, 1.6]),
            track(TEMP, [16.0, 18.0, 20.0]),
            track(SGR, [80.0, 110.0, 140.0]),
        ],
    }
}

fn drought_regime() -> MarkovSpec {
    MarkovSpec {
        tracks: vec![
            track(PRECIP, [0.8, 1.0, 1.2]),
            track(TEMP, [18.0, 19.0, 20.0]),
            track(SGR, [40.0, 50.0, 60.0]),
        ],
    }
}

fn params() -> MonoParams {
    MonoParams {
        gw_with: 6.8,
        g_dis: 0.0,
        ..MonoParams::default()
    }
}

/// Stock-flow document whose series tracks are left empty for `--exogenous`.
fn sd_document(p: &MonoParams) -> ModelDocument {
    let exo = ExogenousSeries::constant(101, 0.0, 0.0, 0.0);
    let mut m = stock_flow_model(p, &exo, 100).unwrap();
    for t in &mut m.exogenous {
        if let ExoSource::Series(v) = &mut t.source {
            v.clear();
        }
    }
    ModelDocument::new(Body::StockFlow(m))
}

fn expected() -> Vec<(&'static str, String)> {
    let doc = |b| serialize(&ModelDocument::new(b)).unwrap();
    vec![
        (
            "monolake.model",
            serialize(&monolake_document(&params(), 100)).unwrap(),
        ),
        (
            "monolake-sd.model",
            serialize(&sd_document(&params())).unwrap(),
        ),
        (
            "monolake-sd-perturbed.model",
            serialize(&sd_document(&MonoParams {
                lambda_perc: 0.012,
                ..params()
            }))
            .unwrap(),
        ),
        (
            "monolake.markov.model",
            doc(Body::MarkovSpec(main_regime())),
        ),
        (
            "monolake-drought.markov.model",
            doc(Body::MarkovSpec(drought_regime())),
        ),
        (
            "monolake-exogenous.csv",
            gen_exogenous(&main_regime(), 42, 100).unwrap().to_csv(),
        ),
        (
            "monolake-drought.csv",
            gen_exogenous(&drought_regime(), 42, 30).unwrap().to_csv(),
        ),
    ]
}

#[test]
fn fixtures_match_their_generators() {
    let bless = std::env::var_os("BLESS").is_some();
    for (name, text) in expected() {
        let path = dir().join(name);
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(on_disk, text, "{name} is stale; rerun with BLESS=1");
    }
}

#[test]
fn model_fixtures_parse_cleanly_and_round_trip() {
    for entry in std::fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("model") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let (doc, warnings) = parse(&text, None, ParseMode::Strict)
            .unwrap_or_else(|d| panic!("{}: {:?}", path.display(), d));
        assert!(warnings.is_empty(), "{}", path.display());
        assert_eq!(serialize(&doc).unwrap(), text, "{}", path.display());
    }
}

#[test]
fn monolake_fixture_is_a_spec_with_the_fixture_withdrawal() {
    let text = std::fs::read_to_string(dir().join("monolake.model")).unwrap();
    let (doc, _) = parse(&text, Some(DocumentKind::HfnmcfSpec), ParseMode::Strict).unwrap();
    let Body::HfnmcfSpec(spec) = doc.body else {
        panic!("kind")
    };
    assert_eq!(spec.devices.params["gw_with"], 6.8);
    assert_eq!(spec.horizon, 100);
}

#[test]
fn csv_fixtures_load() {
    let t = load_series(
        &std::fs::read_to_string(dir().join("monolake-exogenous.csv")).unwrap(),
        &SERIES_SCHEMA,
    )
    .unwrap();
    assert_eq!(t.len(), 101);
    let t = load_series(
        &std::fs::read_to_string(dir().join("monolake-drought.csv")).unwrap(),
        &SERIES_SCHEMA,
    )
    .unwrap();
    assert_eq!(t.len(), 31);
}

#[test]
fn toy_qp_solves_to_the_closed_form() {
    use hfgtflow::engine::run_hfgt;
    use hfgtflow::qp::{Mode, SolveOptions, Status};
    let text = std::fs::read_to_string(dir().join("toy-qp.model")).unwrap();
    let (doc, _) = parse(&text, Some(DocumentKind::HfnmcfSpec), ParseMode::Strict).unwrap();
    let Body::HfnmcfSpec(spec) = doc.body else {
        panic!("kind")
    };
    let run = run_hfgt(&spec, None, None, &SolveOptions::default()).unwrap();
    assert_eq!(run.solution.mode, Mode::KktDirect);
    assert_eq!(run.solution.status, Status::Optimal);
    // B gains 4 net over two steps of draw 4: transfers sum to 12, split evenly
    let t = run.trajectory.column("U-:transfer").unwrap();
    for (got, want) in t.iter().zip([6.0, 6.0, 0.0]) {
        assert!((got - want).abs() <= 1e-10, "{t:?}");
    }
    let b = run.trajectory.column("B").unwrap();
    assert!((b[2] - 12.0).abs() <= 1e-10);
}
