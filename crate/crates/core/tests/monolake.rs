use hfgtflow::compare::nrmse;
use hfgtflow::hfnmcf::{assemble, BlockStatus, ConstraintBlock as B, ObjectiveKind};
use hfgtflow::incidence::incidence_of;
use hfgtflow::monolake::{self, build_monolake, ExogenousSeries, MonoParams, FLOWS};
use hfgtflow::qp::{forward_propagate, solve, Mode, SolveError, SolveOptions, Status};
use hfgtflow::sd::run_sd;

fn fixture_params() -> MonoParams {
    MonoParams {
        gw_with: 6.8,
        g_dis: 0.0,
        ..MonoParams::default()
    }
}

#[test]
fn one_step_matches_hand_arithmetic() {
    let p = fixture_params();
    let exo = ExogenousSeries::constant(2, 1.2, 18.0, 150.0);
    let (model, spec, sd) = build_monolake(&p, &exo, 1).unwrap();
    let problem = assemble(&model, &spec).unwrap();
    let (x, _) = forward_propagate(&problem).unwrap();
    let traj = problem.trajectory(&x, &vec![0.0; problem.layout.num_auxiliary()]);
    let lake = traj.column("V_Mono").unwrap();
    let aquifer = traj.column("V_Aqui").unwrap();

    let v = 2228.0_f64;
    let area = 0.008 * v + 15.44;
    let rho = (1.36 * v + 250.0) / (1.36 * v);
    let lambda = 3.75 * (-0.9 * rho + 1.9) * (0.06 * 18.0 - 0.08);
    let lake1 = v + 1.2 * area + (150.0 - 16.0) - lambda * area - 0.01 * v + 0.0;
    let aquifer1 = 6800.0 + 0.01 * v - 6.8 - 0.0;
    assert!((lake[1] - lake1).abs() <= 1e-12 * lake1);
    assert!((aquifer[1] - aquifer1).abs() <= 1e-12 * aquifer1);

    let oracle = run_sd(&sd).unwrap();
    assert!((oracle.column("V_Mono").unwrap()[1] - lake[1]).abs() <= 1e-12 * lake1);
    assert!((oracle.column("V_Aqui").unwrap()[1] - aquifer[1]).abs() <= 1e-12 * aquifer1);
}

#[test]
fn forward_output_satisfies_assembled_constraints() {
    let p = fixture_params();
    let exo = ExogenousSeries {
        precip: (0..=30).map(|k| 0.8 + 0.4 * ((k % 3) as f64)).collect(),
        temp: (0..=30).map(|k| 16.0 + 2.0 * ((k % 3) as f64)).collect(),
        sgr: (0..=30).map(|k| 80.0 + 30.0 * ((k % 3) as f64)).collect(),
    };
    let (model, spec, sd) = build_monolake(&p, &exo, 30).unwrap();
    let problem = assemble(&model, &spec).unwrap();
    let sol = solve(&problem, &SolveOptions::default()).unwrap();
    assert_eq!(sol.mode, Mode::ForwardPropagate);
    assert_eq!(sol.status, Status::Optimal);
    assert!(
        sol.max_residual <= 1e-8,
        "max residual {}",
        sol.max_residual
    );

    let traj = problem.trajectory(&sol.x, &sol.y);
    let oracle = run_sd(&sd).unwrap();
    for name in ["V_Mono", "V_Aqui"] {
        let e = nrmse(traj.column(name).unwrap(), oracle.column(name).unwrap());
        assert!(e <= 1e-9, "{name}: {e}");
    }
    for (i, f) in FLOWS.iter().enumerate() {
        let hf = traj.column(&format!("U-:{f}")).unwrap();
        let sf = oracle.column(f).unwrap();
        for k in 0..=30 {
            assert!(
                (hf[k] - sf[k]).abs() <= 1e-9 * sf[k].abs().max(1.0),
                "flow {i} step {k}"
            );
        }
    }
}

#[test]
fn zero_flows_keep_volumes_constant() {
    let p = MonoParams {
        gw_with: 0.0,
        g_dis: 0.0,
        lambda_perc: 0.0,
        lambda_fw: 0.0,
        ..MonoParams::default()
    };
    let exo = ExogenousSeries::constant(6, 0.0, 18.0, p.v_la);
    let (model, spec, _) = build_monolake(&p, &exo, 5).unwrap();
    let problem = assemble(&model, &spec).unwrap();
    let (x, y) = forward_propagate(&problem).unwrap();
    let traj = problem.trajectory(&x, &y);
    assert!(traj
        .column("V_Mono")
        .unwrap()
        .iter()
        .all(|&v| v == p.v_mono0));
    assert!(traj
        .column("V_Aqui")
        .unwrap()
        .iter()
        .all(|&v| v == p.v_aqui0));
}

#[test]
fn empty_lake_is_nonfinite() {
    let mut p = fixture_params();
    p.v_mono0 = 1.0;
    let exo = ExogenousSeries::constant(2, 1.2, 18.0, 150.0);
    let (model, mut spec, _) = build_monolake(&p, &exo, 1).unwrap();
    spec.initial[0].value = 0.0;
    let problem = assemble(&model, &spec).unwrap();
    assert!(matches!(
        forward_propagate(&problem),
        Err(SolveError::NonfiniteState { step: 0, .. })
    ));
}

#[test]
fn nonlinear_device_models_stay_off_the_kkt_path() {
    let exo = ExogenousSeries::constant(3, 1.2, 18.0, 150.0);
    let (model, spec, _) = build_monolake(&fixture_params(), &exo, 2).unwrap();
    let problem = assemble(&model, &spec).unwrap();
    let opts = SolveOptions {
        mode: Mode::KktDirect,
        ..SolveOptions::default()
    };
    assert!(matches!(
        solve(&problem, &opts),
        Err(SolveError::NonlinearDevice(_))
    ));
}

#[test]
fn collapse_report_and_row_counts() {
    let k = 7;
    let exo = ExogenousSeries::constant(k + 1, 1.2, 18.0, 150.0);
    let (model, spec, _) = build_monolake(&fixture_params(), &exo, k).unwrap();
    let problem = assemble(&model, &spec).unwrap();
    let r = problem.report();
    assert_eq!(r.objective, ObjectiveKind::Feasibility);
    assert_eq!(r.entry(B::PlaceContinuity).rows, 2 * k);
    assert_eq!(r.entry(B::Boundary).rows, 2 * (k + 1));
    assert_eq!(r.entry(B::InitialCondition).rows, 2);
    assert_eq!(r.entry(B::DeviceEquality).rows, 10 * (k + 1));
    assert_eq!(r.entry(B::DeviceAuxiliary).rows, 4 * (k + 1));
    assert_eq!(r.status(B::CapacityBounds), BlockStatus::Relaxed);
    assert_eq!(problem.layout.width(), 8);
}

#[test]
fn incidence_matches_displayed_matrix() {
    let m = incidence_of(&monolake::system_model().unwrap());
    let want = [
        [1.0, 1.0, -1.0, 0.0, -1.0, 1.0],
        [0.0, 0.0, 0.0, -1.0, 1.0, -1.0],
    ];
    assert_eq!(
        m.m.to_dense(),
        want.iter().map(|r| r.to_vec()).collect::<Vec<_>>()
    );
}
