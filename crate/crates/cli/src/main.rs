//! `hfgtflow` command-line tool.
//!
//! Exit codes: 0 ok, 1 comparison threshold exceeded, 2 invalid input,
//! 3 numerical failure. Every flag can also be set through an
//! `HFGTFLOW_*` environment variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hfgtflow::engine::{
    compare_runs, run_hfgt, run_stockflow, stock_names, tracked_variables, trajectory_warnings,
    RunError,
};
use hfgtflow::io::{self, Body, DocumentKind, ModelDocument, ParseMode, Severity};
use hfgtflow::markov::gen_exogenous;
use hfgtflow::monolake::SERIES_SCHEMA;
use hfgtflow::plot::plot_trajectory;
use hfgtflow::qp::{Mode, SolveOptions, Status};
use hfgtflow::series::{load_series, SeriesTable};
use hfgtflow::trajectory::Trajectory;

#[derive(Parser)]
#[command(
    name = "hfgtflow",
    version,
    about = "Simulate, compare and solve hetero-functional flow models"
)]
struct Cli {
    /// Accept unknown document fields with a warning.
    #[arg(long, global = true, env = "HFGTFLOW_LENIENT")]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Sd,
    Hfgt,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMode {
    Auto,
    Kkt,
    Forward,
}

#[derive(clap::Args)]
struct Inputs {
    /// Model document (`.model`).
    #[arg(long, env = "HFGTFLOW_MODEL")]
    model: PathBuf,
    /// Exogenous series CSV; columns replace same-named tracks.
    #[arg(long, env = "HFGTFLOW_EXOGENOUS")]
    exogenous: Option<PathBuf>,
    /// Override the document's horizon.
    #[arg(long, env = "HFGTFLOW_HORIZON")]
    horizon: Option<usize>,
    /// Override the document's step length.
    #[arg(long, env = "HFGTFLOW_DT")]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one engine and write the trajectory CSV.
    Simulate {
        #[arg(long, value_enum, env = "HFGTFLOW_ENGINE")]
        engine: Engine,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, env = "HFGTFLOW_OUT")]
        out: PathBuf,
    },
    /// Run both engines on the same inputs and write a JSON report.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
        /// Stock-flow model for the oracle; derived from the spec when omitted.
        #[arg(long, env = "HFGTFLOW_SD_MODEL")]
        sd_model: Option<PathBuf>,
        /// Largest acceptable nRMSE, in percent.
        #[arg(long, default_value_t = 0.15, env = "HFGTFLOW_THRESHOLD")]
        threshold: f64,
        /// Leave engine runtimes out so reports are byte-identical.
        #[arg(long, env = "HFGTFLOW_NO_TIMINGS")]
        no_timings: bool,
        #[arg(long, env = "HFGTFLOW_OUT")]
        out: PathBuf,
    },
    /// Solve an HFNMCF problem document and write the solution JSON.
    Solve {
        #[arg(long, env = "HFGTFLOW_PROBLEM")]
        problem: PathBuf,
        #[arg(long, env = "HFGTFLOW_EXOGENOUS")]
        exogenous: Option<PathBuf>,
        #[arg(long, env = "HFGTFLOW_HORIZON")]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "auto", env = "HFGTFLOW_MODE")]
        mode: SolveMode,
        #[arg(long, default_value_t = 1e-8, env = "HFGTFLOW_TOLERANCE")]
        tolerance: f64,
        #[arg(long, default_value_t = 0.0, env = "HFGTFLOW_REGULARIZATION")]
        regularization: f64,
        #[arg(long, default_value_t = 500, env = "HFGTFLOW_MAX_ITERATIONS")]
        max_iterations: usize,
        #[arg(long, env = "HFGTFLOW_OUT")]
        out: PathBuf,
    },
    /// Sample exogenous series from a Markov spec.
    GenExogenous {
        #[arg(long, env = "HFGTFLOW_SPEC")]
        spec: PathBuf,
        #[arg(long, env = "HFGTFLOW_SEED")]
        seed: u64,
        #[arg(long, env = "HFGTFLOW_STEPS")]
        steps: usize,
        #[arg(long, env = "HFGTFLOW_OUT")]
        out: PathBuf,
    },
    /// Render trajectory columns as an SVG line chart.
    Plot {
        #[arg(long, env = "HFGTFLOW_TRAJ")]
        traj: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', required = true, env = "HFGTFLOW_VARS")]
        vars: Vec<String>,
        #[arg(long, env = "HFGTFLOW_TITLE")]
        title: Option<String>,
        #[arg(long, env = "HFGTFLOW_OUT")]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    lines: Vec<String>,
}

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            lines: vec![msg.into()],
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Invalid(m) => Failure {
                code: 2,
                lines: vec![m],
            },
            RunError::Numerical(m) => Failure {
                code: 3,
                lines: vec![m],
            },
        }
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        let what = if e.kind() == std::io::ErrorKind::NotFound {
            "file not found".to_string()
        } else {
            e.to_string()
        };
        Failure::invalid(format!("{}: {what}", path.display()))
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_doc(
    path: &Path,
    hint: Option<DocumentKind>,
    mode: ParseMode,
) -> Result<ModelDocument, Failure> {
    let text = read(path)?;
    match io::parse(&text, hint, mode) {
        Ok((doc, warnings)) => {
            for w in warnings {
                eprintln!("{}:{w}", path.display());
            }
            Ok(doc)
        }
        Err(diags) => Err(Failure {
            code: 2,
            lines: diags
                .iter()
                .filter(|d| d.severity == Severity::Error || mode == ParseMode::Lenient)
                .map(|d| format!("{}:{d}", path.display()))
                .collect(),
        }),
    }
}

fn is_monolake(doc: &ModelDocument) -> bool {
    matches!(&doc.body, Body::HfnmcfSpec(s) if s.devices.set == "monolake")
}

fn load_exogenous(path: Option<&Path>, monolake: bool) -> Result<Option<SeriesTable>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let schema: &[&str] = if monolake { &SERIES_SCHEMA } else { &[] };
    load_series(&read(path)?, schema)
        .map(Some)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn apply_dt(doc: &mut ModelDocument, dt: Option<f64>) -> Result<(), Failure> {
    let Some(dt) = dt else { return Ok(()) };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Failure::invalid(format!("--dt must be positive, got {dt}")));
    }
    match &mut doc.body {
        Body::HfnmcfSpec(s) => {
            s.dt = dt;
            if let Some(v) = s.devices.params.get_mut("dt") {
                *v = dt;
            }
        }
        Body::StockFlow(m) => m.dt = dt,
        _ => {}
    }
    Ok(())
}

fn spec_of(doc: &ModelDocument) -> Result<&io::SpecDoc, Failure> {
    match &doc.body {
        Body::HfnmcfSpec(s) => Ok(s),
        _ => Err(Failure::invalid(format!(
            "expected an hfnmcf-spec document, found `{}`",
            doc.kind().as_str()
        ))),
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Auto => "auto",
        Mode::KktDirect => "kkt-direct",
        Mode::ForwardPropagate => "forward-propagate",
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Infeasible => "infeasible",
        Status::Unbounded => "unbounded",
        Status::MaxIterations => "max-iterations",
    }
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn simulate(engine: Engine, inputs: &Inputs, out: &Path, mode: ParseMode) -> Outcome {
    let mut doc = load_doc(&inputs.model, None, mode)?;
    apply_dt(&mut doc, inputs.dt)?;
    let exo = load_exogenous(inputs.exogenous.as_deref(), is_monolake(&doc))?;
    let traj = match engine {
        Engine::Sd => run_stockflow(&doc, exo.as_ref(), inputs.horizon)?,
        Engine::Hfgt => {
            run_hfgt(
                spec_of(&doc)?,
                exo.as_ref(),
                inputs.horizon,
                &SolveOptions::default(),
            )?
            .trajectory
        }
    };
    write(out, &traj.to_csv())?;
    warn(&trajectory_warnings(&traj, &stock_names(&doc)));
    Ok(0)
}

fn warn(lines: &[String]) {
    for l in lines {
        eprintln!("warning: {l}");
    }
}

#[derive(Serialize)]
struct VariableReport {
    name: String,
    nrmse_percent: f64,
    max_abs_deviation: f64,
    first_divergence_step: Option<usize>,
    within_threshold: bool,
}

#[derive(Serialize)]
struct Runtimes {
    sd_ms: f64,
    hfgt_ms: f64,
}

#[derive(Serialize)]
struct CompareReport {
    passed: bool,
    threshold_percent: f64,
    oracle: &'static str,
    hfgt_mode: &'static str,
    variables: Vec<VariableReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtimes: Option<Runtimes>,
    config: BTreeMap<&'static str, serde_json::Value>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64() * 1e3)
}

fn compare(
    inputs: &Inputs,
    sd_model: Option<&Path>,
    threshold: f64,
    no_timings: bool,
    out: &Path,
    mode: ParseMode,
) -> Outcome {
    if !(threshold >= 0.0) {
        return Err(Failure::invalid(format!(
            "--threshold must be nonnegative, got {threshold}"
        )));
    }
    let mut doc = load_doc(&inputs.model, Some(DocumentKind::HfnmcfSpec), mode)?;
    apply_dt(&mut doc, inputs.dt)?;
    let oracle_doc = match sd_model {
        Some(p) => {
            let mut d = load_doc(p, Some(DocumentKind::StockFlow), mode)?;
            apply_dt(&mut d, inputs.dt)?;
            d
        }
        None => doc.clone(),
    };
    let exo = load_exogenous(inputs.exogenous.as_deref(), is_monolake(&doc))?;
    let spec = spec_of(&doc)?;
    let opts = SolveOptions::default();

    // each engine owns its inputs; results merge after both finish
    let ((hfgt, hfgt_ms), (sd, sd_ms)) = std::thread::scope(|s| {
        let h = s.spawn(|| timed(|| run_hfgt(spec, exo.as_ref(), inputs.horizon, &opts)));
        let o = timed(|| run_stockflow(&oracle_doc, exo.as_ref(), inputs.horizon));
        (h.join().expect("hfgt engine thread"), o)
    });
    let hfgt = hfgt?;
    let sd = sd?;
    warn(&trajectory_warnings(&hfgt.trajectory, &stock_names(&doc)));
    let vars = tracked_variables(&hfgt.problem, &sd);
    if vars.is_empty() {
        return Err(Failure::invalid("the two models share no state variables"));
    }
    let rows = compare_runs(&hfgt.trajectory, &sd, &vars)?;
    let variables: Vec<VariableReport> = rows
        .into_iter()
        .map(|c| VariableReport {
            within_threshold: c.nrmse_percent <= threshold,
            name: c.name,
            nrmse_percent: c.nrmse_percent,
            max_abs_deviation: c.max_abs_deviation,
            first_divergence_step: c.first_divergence,
        })
        .collect();
    let passed = variables.iter().all(|v| v.within_threshold);
    let path = |p: &Path| serde_json::Value::from(p.display().to_string());
    let mut config = BTreeMap::new();
    config.insert("model", path(&inputs.model));
    config.insert("sd_model", sd_model.map_or(serde_json::Value::Null, path));
    config.insert(
        "exogenous",
        inputs
            .exogenous
            .as_deref()
            .map_or(serde_json::Value::Null, path),
    );
    config.insert("horizon", (hfgt.trajectory.len().saturating_sub(1)).into());
    config.insert("dt", hfgt.problem.dt.into());
    let report = CompareReport {
        passed,
        threshold_percent: threshold,
        oracle: "sd",
        hfgt_mode: mode_name(hfgt.solution.mode),
        variables,
        runtimes: (!no_timings).then_some(Runtimes { sd_ms, hfgt_ms }),
        config,
    };
    write(out, &json(&report))?;
    for v in report.variables.iter().filter(|v| !v.within_threshold) {
        eprintln!(
            "{}: nRMSE {:.6}% exceeds {}%",
            v.name, v.nrmse_percent, threshold
        );
    }
    Ok(if passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct SolveReport {
    status: &'static str,
    mode: &'static str,
    objective: f64,
    iterations: usize,
    max_residual: f64,
    residuals: BTreeMap<&'static str, f64>,
    multipliers: BTreeMap<&'static str, Vec<f64>>,
    collapse: Vec<CollapseRow>,
    variables: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize)]
struct CollapseRow {
    block: &'static str,
    status: String,
    rows: usize,
    reason: String,
}

#[allow(clippy::too_many_arguments)]
fn solve(
    problem: &Path,
    exogenous: Option<&Path>,
    horizon: Option<usize>,
    mode: SolveMode,
    tolerance: f64,
    regularization: f64,
    max_iterations: usize,
    out: &Path,
    parse_mode: ParseMode,
) -> Outcome {
    let doc = load_doc(problem, Some(DocumentKind::HfnmcfSpec), parse_mode)?;
    let exo = load_exogenous(exogenous, is_monolake(&doc))?;
    let mode = match mode {
        SolveMode::Auto => Mode::Auto,
        SolveMode::Kkt => Mode::KktDirect,
        SolveMode::Forward => Mode::ForwardPropagate,
    };
    let opts = SolveOptions {
        mode,
        max_iterations,
        tolerance,
        regularization,
    };
    let (model, spec) = spec_of(&doc)?
        .build(exo.as_ref(), horizon)
        .map_err(Failure::invalid)?;
    let problem =
        hfgtflow::hfnmcf::assemble(&model, &spec).map_err(|e| Failure::invalid(e.to_string()))?;
    let sol = hfgtflow::qp::solve(&problem, &opts).map_err(|e| Failure::from(RunError::from(e)))?;
    let traj: Trajectory = problem.trajectory(&sol.x, &sol.y);
    let report = SolveReport {
        status: status_name(sol.status),
        mode: mode_name(sol.mode),
        objective: sol.objective,
        iterations: sol.iterations,
        max_residual: sol.max_residual,
        residuals: sol.residuals.iter().map(|(b, v)| (b.label(), *v)).collect(),
        multipliers: sol
            .multipliers
            .iter()
            .map(|(b, v)| (b.label(), v.clone()))
            .collect(),
        collapse: problem
            .report()
            .entries
            .iter()
            .map(|e| CollapseRow {
                block: e.block.label(),
                status: format!("{:?}", e.status).to_lowercase(),
                rows: e.rows,
                reason: e.reason.clone(),
            })
            .collect(),
        variables: traj
            .names()
            .iter()
            .map(|n| (n.clone(), traj.column(n).expect("listed").to_vec()))
            .collect(),
    };
    write(out, &json(&report))?;
    if sol.status == Status::Optimal {
        Ok(0)
    } else {
        eprintln!("solver finished with status {}", status_name(sol.status));
        Ok(3)
    }
}

fn gen(spec: &Path, seed: u64, steps: usize, out: &Path, mode: ParseMode) -> Outcome {
    let doc = load_doc(spec, Some(DocumentKind::MarkovSpec), mode)?;
    let Body::MarkovSpec(m) = &doc.body else {
        unreachable!("kind checked by the parser")
    };
    let table = gen_exogenous(m, seed, steps).map_err(|e| Failure::invalid(e.to_string()))?;
    write(out, &table.to_csv())?;
    Ok(0)
}

fn plot(traj: &Path, vars: &[String], title: Option<&str>, out: &Path) -> Outcome {
    let t = Trajectory::from_csv(&read(traj)?, 1.0)
        .map_err(|e| Failure::invalid(format!("{}: {e}", traj.display())))?;
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let title = title.map_or_else(|| names.join(", "), str::to_string);
    let svg = plot_trajectory(&t, &names, &title)
        .map_err(|v| Failure::invalid(format!("{}: no column `{v}`", traj.display())))?;
    write(out, &svg)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = if cli.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let result = match &cli.command {
        Command::Simulate {
            engine,
            inputs,
            out,
        } => simulate(*engine, inputs, out, mode),
        Command::Compare {
            inputs,
            sd_model,
            threshold,
            no_timings,
            out,
        } => compare(
            inputs,
            sd_model.as_deref(),
            *threshold,
            *no_timings,
            out,
            mode,
        ),
        Command::Solve {
            problem,
            exogenous,
            horizon,
            mode: m,
            tolerance,
            regularization,
            max_iterations,
            out,
        } => solve(
            problem,
            exogenous.as_deref(),
            *horizon,
            *m,
            *tolerance,
            *regularization,
            *max_iterations,
            out,
            mode,
        ),
        Command::GenExogenous {
            spec,
            seed,
            steps,
            out,
        } => gen(spec, *seed, *steps, out, mode),
        Command::Plot {
            traj,
            vars,
            title,
            out,
        } => plot(traj, vars, title.as_deref(), out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            for l in &f.lines {
                eprintln!("error: {l}");
            }
            ExitCode::from(f.code)
        }
    }
}
