//! Assembly of the time-expanded hetero-functional network minimum cost
//! flow (HFNMCF) program.
//!
//! ```text
//! minimize   Σ_k x[k]ᵀ F x[k] + fᵀ x[k]
//! subject to engineering-system and operand-net state transitions,
//!            transition durations, synchronization, boundary pins,
//!            initial / final conditions, capacity bounds,
//!            device models g(X, Y) = 0 and h(Y) ≤ 0
//! ```
//!
//! [`assemble`] turns a [`SystemModel`] plus an [`HfnmcfSpec`] into an
//! immutable [`HfnmcfProblem`]: linear equality rows over the stacked
//! decision vector, resolved device models, bounds and a
//! [`CollapseReport`] saying which blocks are live.

pub mod device;
pub mod layout;
pub mod report;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::incidence::{incidence_of, IncidenceMatrices};
use crate::model::SystemModel;
use crate::nets::{OperandNet, SyncMatrices};
use crate::series::SeriesTable;
use crate::trajectory::Trajectory;

pub use device::{
    device_set, DeviceBlock, DeviceFn, DeviceKind, DeviceModel, DeviceParams, DeviceSet,
};
pub use layout::{Layout, Var};
pub use report::{BlockEntry, BlockStatus, CollapseReport, ConstraintBlock, ObjectiveKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("inconsistent horizon: {what} has {len} steps, horizon {horizon} needs {needed}")]
    InconsistentHorizon {
        what: String,
        len: usize,
        horizon: usize,
        needed: usize,
    },
    #[error("overdetermined initial condition: `{0}` selected more than once")]
    OverdeterminedInitialCondition(String),
    #[error("overdetermined final condition: `{0}` selected more than once")]
    OverdeterminedFinalCondition(String),
    #[error("`{0}` is pinned more than once")]
    DuplicatePin(String),
    #[error(
        "pin `{pin}` sets {value} at the final step, where final conditions allow no new firings"
    )]
    PinConflictsWithFinal { pin: String, value: f64 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` was eliminated by firing consolidation")]
    EliminatedVariable(String),
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("unknown operand transition `{0}`")]
    UnknownOperandTransition(String),
    #[error("unknown exogenous track `{0}`")]
    UnknownTrack(String),
    #[error("quadratic cost must be diagonal; entry ({0}, {1}) is nonzero")]
    NonDiagonalCost(usize, usize),
    #[error("quadratic cost must be positive semi-definite; diagonal entry {0} is {1}")]
    NegativeCost(usize, f64),
    #[error("{what} has length {len}, step block width is {width}")]
    CostLength {
        what: &'static str,
        len: usize,
        width: usize,
    },
    #[error("bound on `{0}` has lower > upper")]
    InvalidBounds(String),
    #[error("device model `{model}`: {message}")]
    Device { model: String, message: String },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

/// Input or output firing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Value of a per-step pin.
#[derive(Debug, Clone, PartialEq)]
pub enum PinValue {
    Constant(f64),
    /// Column of the exogenous table.
    Track(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPin {
    pub capability: String,
    pub side: Side,
    pub value: PinValue,
}

/// Pin on an operand-net transition, named `operand.transition`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperandPin {
    pub transition: String,
    pub side: Side,
    pub value: PinValue,
}

/// `variable = value` at the first (initial) or last (final) step.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub variable: String,
    pub value: f64,
}

/// Box bound on a per-step variable, applied at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub variable: String,
    pub lower: f64,
    pub upper: f64,
}

/// Couples operand transition `operand.transition` to a capability.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncLink {
    pub operand_transition: String,
    pub capability: String,
}

/// Separable objective over one step block. Empty vectors mean zero cost.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    /// Diagonal of the positive semi-definite quadratic cost `F`.
    pub quadratic: Vec<f64>,
    pub linear: Vec<f64>,
}

impl Objective {
    /// Accepts a full matrix but insists on diagonal, nonnegative structure.
    pub fn from_matrix(matrix: &[Vec<f64>], linear: Vec<f64>) -> Result<Self, AssemblyError> {
        let mut diag = Vec::with_capacity(matrix.len());
        for (i, row) in matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && v != 0.0 {
                    return Err(AssemblyError::NonDiagonalCost(i, j));
                }
            }
            diag.push(row.get(i).copied().unwrap_or(0.0));
        }
        Ok(Self {
            quadratic: diag,
            linear,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.quadratic.iter().chain(&self.linear).all(|&v| v == 0.0)
    }
}

/// Everything beyond the system model needed to pose the program.
#[derive(Debug, Clone)]
pub struct HfnmcfSpec {
    pub horizon: usize,
    pub dt: f64,
    /// Overrides for the `operand@buffer` place labels.
    pub place_names: Option<Vec<String>>,
    pub objective: Objective,
    pub exogenous: SeriesTable,
    pub boundary: Vec<BoundaryPin>,
    pub operand_nets: Vec<OperandNet>,
    pub sync: Vec<SyncLink>,
    pub operand_boundary: Vec<OperandPin>,
    pub initial: Vec<Condition>,
    pub final_conditions: Option<Vec<Condition>>,
    pub bounds: Vec<Bound>,
    pub devices: DeviceSet,
}

impl HfnmcfSpec {
    pub fn new(horizon: usize, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            place_names: None,
            objective: Objective::default(),
            exogenous: SeriesTable::new(vec![], vec![]),
            boundary: vec![],
            operand_nets: vec![],
            sync: vec![],
            operand_boundary: vec![],
            initial: vec![],
            final_conditions: None,
            bounds: vec![],
            devices: DeviceSet::default(),
        }
    }
}

/// `Σ coef·z = rhs` over the joint vector `z = [X; Y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub block: ConstraintBlock,
    pub step: usize,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Where a device-model input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Primary(Var),
    Aux(usize),
    Exogenous(usize),
}

/// A device model with names resolved against the layout.
#[derive(Debug, Clone)]
pub struct ResolvedDevice {
    pub model: DeviceModel,
    pub target: Option<Source>,
    pub reads: Vec<Source>,
}

#[derive(Debug, Clone)]
pub struct HfnmcfProblem {
    pub layout: Layout,
    pub dt: f64,
    pub incidence: IncidenceMatrices,
    pub durations: Vec<usize>,
    pub capability_ids: Vec<String>,
    pub operand_nets: Vec<OperandNet>,
    pub sync: SyncMatrices,
    /// Per-step names, indexed by step-block offset.
    pub var_names: Vec<String>,
    pub aux_names: Vec<String>,
    pub quadratic: Vec<f64>,
    pub linear: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub devices: Vec<ResolvedDevice>,
    pub exogenous: SeriesTable,
    /// Per-step box bounds by step-block offset.
    pub bounds: Vec<(usize, f64, f64)>,
    pub has_final_conditions: bool,
    pub report: CollapseReport,
}

struct NameTable {
    vars: HashMap<String, Var>,
    aux: HashMap<String, usize>,
    exo: HashMap<String, usize>,
}

impl NameTable {
    fn resolve(&self, layout: &Layout, name: &str) -> Result<Source, AssemblyError> {
        if let Some(&v) = self.vars.get(name) {
            if layout.offset(v).is_none() {
                return Err(AssemblyError::EliminatedVariable(name.to_string()));
            }
            return Ok(Source::Primary(v));
        }
        if let Some(&j) = self.aux.get(name) {
            return Ok(Source::Aux(j));
        }
        if let Some(&j) = self.exo.get(name) {
            return Ok(Source::Exogenous(j));
        }
        Err(AssemblyError::UnknownVariable(name.to_string()))
    }

    fn primary(&self, layout: &Layout, name: &str) -> Result<Var, AssemblyError> {
        match self.resolve(layout, name)? {
            Source::Primary(v) => Ok(v),
            _ => Err(AssemblyError::UnknownVariable(name.to_string())),
        }
    }
}

fn series(
    value: &PinValue,
    exo: &SeriesTable,
    horizon: usize,
    what: &str,
) -> Result<Vec<f64>, AssemblyError> {
    let needed = horizon + 1;
    let check = |v: &[f64]| {
        if v.len() < needed {
            Err(AssemblyError::InconsistentHorizon {
                what: what.to_string(),
                len: v.len(),
                horizon,
                needed,
            })
        } else {
            Ok(v[..needed].to_vec())
        }
    };
    match value {
        PinValue::Constant(c) => Ok(vec![*c; needed]),
        PinValue::Values(v) => check(v),
        PinValue::Track(name) => {
            let col = exo
                .column(name)
                .ok_or_else(|| AssemblyError::UnknownTrack(name.clone()))?;
            check(col)
        }
    }
}

/// Accumulates terms so aliased columns combine into one coefficient.
fn row(block: ConstraintBlock, step: usize, terms: &[(Option<usize>, f64)], rhs: f64) -> LinearRow {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for &(col, coef) in terms {
        if let Some(c) = col {
            *acc.entry(c).or_insert(0.0) += coef;
        }
    }
    LinearRow {
        block,
        step,
        terms: acc.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        rhs,
    }
}

struct Entry(ConstraintBlock, BlockStatus, String);

/// Assembles the program. Deterministic: the same inputs give identical rows.
pub fn assemble(model: &SystemModel, spec: &HfnmcfSpec) -> Result<HfnmcfProblem, AssemblyError> {
    use ConstraintBlock as B;

    if !(spec.dt > 0.0) {
        return Err(AssemblyError::NonPositiveStep(spec.dt));
    }
    let k_max = spec.horizon;
    let dt = spec.dt;
    let incidence = incidence_of(model);
    let durations = model.durations();
    let n_caps = model.num_capabilities();
    let n_places = model.num_places();
    let capability_ids: Vec<String> = model.capabilities().iter().map(|c| c.id.clone()).collect();

    let op_places: usize = spec.operand_nets.iter().map(OperandNet::num_places).sum();
    let op_trans: usize = spec
        .operand_nets
        .iter()
        .map(OperandNet::num_transitions)
        .sum();
    let esn_consolidated = durations.iter().all(|&d| d == 0);
    let operand_consolidated = spec
        .operand_nets
        .iter()
        .all(|n| n.durations.iter().all(|&d| d == 0));

    let layout = Layout {
        horizon: k_max,
        places: n_places,
        capabilities: n_caps,
        operand_places: op_places,
        operand_transitions: op_trans,
        aux: spec.devices.aux_names.len(),
        esn_consolidated,
        operand_consolidated,
    };

    // names
    let place_names: Vec<String> = match &spec.place_names {
        Some(names) => {
            if names.len() != n_places {
                return Err(AssemblyError::DimMismatch(format!(
                    "{} place names for {} places",
                    names.len(),
                    n_places
                )));
            }
            names.clone()
        }
        None => (0..n_places).map(|p| model.place_label(p)).collect(),
    };
    let mut op_place_names = Vec::with_capacity(op_places);
    let mut op_trans_names = Vec::with_capacity(op_trans);
    for net in &spec.operand_nets {
        op_place_names.extend(net.places.iter().map(|p| format!("{}.{}", net.operand, p)));
        op_trans_names.extend(
            net.transitions
                .iter()
                .map(|t| format!("{}.{}", net.operand, t)),
        );
    }
    let name_of = |v: Var| -> String {
        match v {
            Var::Place(i) => place_names[i].clone(),
            Var::InFlight(i) => format!("Q_E:{}", capability_ids[i]),
            Var::OperandPlace(i) => format!("Q_SL:{}", op_place_names[i]),
            Var::OperandInFlight(i) => format!("Q_EL:{}", op_trans_names[i]),
            Var::Input(i) => format!("U-:{}", capability_ids[i]),
            Var::Output(i) => format!("U+:{}", capability_ids[i]),
            Var::OperandInput(i) => format!("U-L:{}", op_trans_names[i]),
            Var::OperandOutput(i) => format!("U+L:{}", op_trans_names[i]),
        }
    };
    let all_vars: Vec<Var> = (0..n_places)
        .map(Var::Place)
        .chain((0..n_caps).flat_map(|i| [Var::InFlight(i), Var::Input(i), Var::Output(i)]))
        .chain((0..op_places).map(Var::OperandPlace))
        .chain((0..op_trans).flat_map(|i| {
            [
                Var::OperandInFlight(i),
                Var::OperandInput(i),
                Var::OperandOutput(i),
            ]
        }))
        .collect();
    let mut names = NameTable {
        vars: HashMap::new(),
        aux: HashMap::new(),
        exo: HashMap::new(),
    };
    for v in &all_vars {
        names.vars.insert(name_of(*v), *v);
    }
    for (j, a) in spec.devices.aux_names.iter().enumerate() {
        names.aux.insert(a.clone(), j);
    }
    for (j, e) in spec.exogenous.names().iter().enumerate() {
        names.exo.insert(e.clone(), j);
    }
    if spec.exogenous.names().len() > 0 && spec.exogenous.len() < k_max + 1 {
        return Err(AssemblyError::InconsistentHorizon {
            what: "exogenous table".into(),
            len: spec.exogenous.len(),
            horizon: k_max,
            needed: k_max + 1,
        });
    }
    let var_names: Vec<String> = layout.block_vars().into_iter().map(name_of).collect();

    // objective
    let width = layout.width();
    let quadratic = if spec.objective.quadratic.is_empty() {
        vec![0.0; width]
    } else {
        spec.objective.quadratic.clone()
    };
    let linear = if spec.objective.linear.is_empty() {
        vec![0.0; width]
    } else {
        spec.objective.linear.clone()
    };
    if quadratic.len() != width {
        return Err(AssemblyError::CostLength {
            what: "quadratic cost",
            len: quadratic.len(),
            width,
        });
    }
    if linear.len() != width {
        return Err(AssemblyError::CostLength {
            what: "linear cost",
            len: linear.len(),
            width,
        });
    }
    if let Some((i, &v)) = quadratic.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(AssemblyError::NegativeCost(i, v));
    }
    let objective = if spec.objective.is_zero() {
        ObjectiveKind::Feasibility
    } else if quadratic.iter().all(|&v| v == 0.0) {
        ObjectiveKind::Linear
    } else {
        ObjectiveKind::Quadratic
    };

    let col = |k: usize, v: Var| layout.col(k, v);
    let mut rows: Vec<LinearRow> = Vec::new();
    let mut entries: Vec<Entry> = Vec::new();

    // engineering system net
    if n_places > 0 {
        for k in 0..k_max {
            for p in 0..n_places {
                let mut t = vec![
                    (col(k + 1, Var::Place(p)), -1.0),
                    (col(k, Var::Place(p)), 1.0),
                ];
                for (psi, w) in incidence.m_plus.row_entries(p) {
                    t.push((col(k, Var::Output(psi)), w * dt));
                }
                for (psi, w) in incidence.m_minus.row_entries(p) {
                    t.push((col(k, Var::Input(psi)), -w * dt));
                }
                rows.push(row(B::PlaceContinuity, k, &t, 0.0));
            }
        }
        entries.push(Entry(
            B::PlaceContinuity,
            BlockStatus::Active,
            "buffer continuity".into(),
        ));
    } else {
        entries.push(Entry(
            B::PlaceContinuity,
            BlockStatus::Absent,
            "no buffers".into(),
        ));
    }

    if n_caps == 0 {
        entries.push(Entry(
            B::TransitionContinuity,
            BlockStatus::Collapsed,
            "no capabilities".into(),
        ));
        entries.push(Entry(
            B::Duration,
            BlockStatus::Collapsed,
            "no capabilities".into(),
        ));
    } else if esn_consolidated {
        entries.push(Entry(
            B::TransitionContinuity,
            BlockStatus::Collapsed,
            "instantaneous capabilities: U+ = U-, in-flight markings constant".into(),
        ));
        entries.push(Entry(
            B::Duration,
            BlockStatus::Collapsed,
            "k_d = 0 for every capability".into(),
        ));
    } else {
        for k in 0..k_max {
            for psi in 0..n_caps {
                let t = [
                    (col(k + 1, Var::InFlight(psi)), -1.0),
                    (col(k, Var::InFlight(psi)), 1.0),
                    (col(k, Var::Output(psi)), -dt),
                    (col(k, Var::Input(psi)), dt),
                ];
                rows.push(row(B::TransitionContinuity, k, &t, 0.0));
            }
        }
        for (psi, &kd) in durations.iter().enumerate() {
            for k in 0..=k_max {
                if k + kd > k_max {
                    break;
                }
                let t = [
                    (col(k + kd, Var::Output(psi)), -1.0),
                    (col(k, Var::Input(psi)), 1.0),
                ];
                rows.push(row(B::Duration, k, &t, 0.0));
            }
        }
        entries.push(Entry(
            B::TransitionContinuity,
            BlockStatus::Active,
            "in-flight continuity".into(),
        ));
        entries.push(Entry(
            B::Duration,
            BlockStatus::Active,
            "transition durations".into(),
        ));
    }

    // operand nets
    let mut sync_selection: Vec<Option<usize>> = vec![None; op_trans];
    if spec.operand_nets.is_empty() {
        for b in [
            B::OperandPlaceContinuity,
            B::OperandTransitionContinuity,
            B::OperandDuration,
        ] {
            entries.push(Entry(
                b,
                BlockStatus::Collapsed,
                "no operand nets: operands do not change state".into(),
            ));
        }
        for b in [B::SyncPlus, B::SyncMinus] {
            entries.push(Entry(
                b,
                BlockStatus::Collapsed,
                "no operand nets to synchronize".into(),
            ));
        }
    } else {
        let (mut place_off, mut trans_off) = (0, 0);
        for net in &spec.operand_nets {
            for k in 0..k_max {
                for p in 0..net.num_places() {
                    let gp = place_off + p;
                    let mut t = vec![
                        (col(k + 1, Var::OperandPlace(gp)), -1.0),
                        (col(k, Var::OperandPlace(gp)), 1.0),
                    ];
                    for (x, w) in net.incidence.m_plus.row_entries(p) {
                        t.push((col(k, Var::OperandOutput(trans_off + x)), w * dt));
                    }
                    for (x, w) in net.incidence.m_minus.row_entries(p) {
                        t.push((col(k, Var::OperandInput(trans_off + x)), -w * dt));
                    }
                    rows.push(row(B::OperandPlaceContinuity, k, &t, 0.0));
                }
                if !operand_consolidated {
                    for x in 0..net.num_transitions() {
                        let gx = trans_off + x;
                        let t = [
                            (col(k + 1, Var::OperandInFlight(gx)), -1.0),
                            (col(k, Var::OperandInFlight(gx)), 1.0),
                            (col(k, Var::OperandOutput(gx)), -dt),
                            (col(k, Var::OperandInput(gx)), dt),
                        ];
                        rows.push(row(B::OperandTransitionContinuity, k, &t, 0.0));
                    }
                }
            }
            if !operand_consolidated {
                for (x, &kd) in net.durations.iter().enumerate() {
                    let gx = trans_off + x;
                    for k in 0..=k_max {
                        if k + kd > k_max {
                            break;
                        }
                        let t = [
                            (col(k + kd, Var::OperandOutput(gx)), -1.0),
                            (col(k, Var::OperandInput(gx)), 1.0),
                        ];
                        rows.push(row(B::OperandDuration, k, &t, 0.0));
                    }
                }
            }
            place_off += net.num_places();
            trans_off += net.num_transitions();
        }
        entries.push(Entry(
            B::OperandPlaceContinuity,
            BlockStatus::Active,
            "operand state continuity".into(),
        ));
        if operand_consolidated {
            entries.push(Entry(
                B::OperandTransitionContinuity,
                BlockStatus::Collapsed,
                "instantaneous operand transitions".into(),
            ));
            entries.push(Entry(
                B::OperandDuration,
                BlockStatus::Collapsed,
                "k_dx = 0 for every operand transition".into(),
            ));
        } else {
            entries.push(Entry(
                B::OperandTransitionContinuity,
                BlockStatus::Active,
                "operand in-flight continuity".into(),
            ));
            entries.push(Entry(
                B::OperandDuration,
                BlockStatus::Active,
                "operand transition durations".into(),
            ));
        }

        for link in &spec.sync {
            let x = op_trans_names
                .iter()
                .position(|n| *n == link.operand_transition)
                .ok_or_else(|| {
                    AssemblyError::UnknownOperandTransition(link.operand_transition.clone())
                })?;
            let psi = model
                .capability_index(&link.capability)
                .ok_or_else(|| AssemblyError::UnknownCapability(link.capability.clone()))?;
            if sync_selection[x].replace(psi).is_some() {
                return Err(AssemblyError::DuplicatePin(format!(
                    "sync {}",
                    link.operand_transition
                )));
            }
        }
        let plus_implied = esn_consolidated && operand_consolidated;
        for k in 0..=k_max {
            for (x, sel) in sync_selection.iter().enumerate() {
                let mut t = vec![(col(k, Var::OperandInput(x)), 1.0)];
                if let Some(psi) = sel {
                    t.push((col(k, Var::Input(*psi)), -1.0));
                }
                rows.push(row(B::SyncMinus, k, &t, 0.0));
                if !plus_implied {
                    let mut t = vec![(col(k, Var::OperandOutput(x)), 1.0)];
                    if let Some(psi) = sel {
                        t.push((col(k, Var::Output(*psi)), -1.0));
                    }
                    rows.push(row(B::SyncPlus, k, &t, 0.0));
                }
            }
        }
        if plus_implied {
            entries.push(Entry(
                B::SyncPlus,
                BlockStatus::Collapsed,
                "implied by sync-minus after consolidation".into(),
            ));
        } else {
            entries.push(Entry(
                B::SyncPlus,
                BlockStatus::Active,
                "output firing synchronization".into(),
            ));
        }
        entries.push(Entry(
            B::SyncMinus,
            BlockStatus::Active,
            "input firing synchronization".into(),
        ));
    }
    let sync = SyncMatrices::from_selection(&sync_selection, n_caps);

    // boundary pins
    let mut pinned: HashSet<Var> = HashSet::new();
    for pin in &spec.boundary {
        let psi = model
            .capability_index(&pin.capability)
            .ok_or_else(|| AssemblyError::UnknownCapability(pin.capability.clone()))?;
        let var = match pin.side {
            Side::Input => Var::Input(psi),
            Side::Output => Var::Output(psi),
        };
        let canonical = if esn_consolidated {
            Var::Input(psi)
        } else {
            var
        };
        if !pinned.insert(canonical) {
            return Err(AssemblyError::DuplicatePin(pin.capability.clone()));
        }
        let values = series(
            &pin.value,
            &spec.exogenous,
            k_max,
            &format!("boundary pin `{}`", pin.capability),
        )?;
        for (k, v) in values.into_iter().enumerate() {
            // the final block already fixes starting firings at the last step
            if k == k_max && spec.final_conditions.is_some() && canonical == Var::Input(psi) {
                if v != 0.0 {
                    return Err(AssemblyError::PinConflictsWithFinal {
                        pin: pin.capability.clone(),
                        value: v,
                    });
                }
                continue;
            }
            rows.push(row(B::Boundary, k, &[(col(k, var), 1.0)], v));
        }
    }
    entries.push(if spec.boundary.is_empty() {
        Entry(
            B::Boundary,
            BlockStatus::Absent,
            "no exogenous firing pins".into(),
        )
    } else {
        Entry(
            B::Boundary,
            BlockStatus::Active,
            format!("{} firing pins per step", spec.boundary.len()),
        )
    });

    for pin in &spec.operand_boundary {
        let x = op_trans_names
            .iter()
            .position(|n| *n == pin.transition)
            .ok_or_else(|| AssemblyError::UnknownOperandTransition(pin.transition.clone()))?;
        let var = match pin.side {
            Side::Input => Var::OperandInput(x),
            Side::Output => Var::OperandOutput(x),
        };
        let canonical = if operand_consolidated {
            Var::OperandInput(x)
        } else {
            var
        };
        if !pinned.insert(canonical) {
            return Err(AssemblyError::DuplicatePin(pin.transition.clone()));
        }
        let values = series(
            &pin.value,
            &spec.exogenous,
            k_max,
            &format!("operand pin `{}`", pin.transition),
        )?;
        for (k, v) in values.into_iter().enumerate() {
            if k == k_max && spec.final_conditions.is_some() && canonical == Var::OperandInput(x) {
                if v != 0.0 {
                    return Err(AssemblyError::PinConflictsWithFinal {
                        pin: pin.transition.clone(),
                        value: v,
                    });
                }
                continue;
            }
            rows.push(row(B::OperandBoundary, k, &[(col(k, var), 1.0)], v));
        }
    }
    entries.push(if spec.operand_boundary.is_empty() {
        let why = if spec.operand_nets.is_empty() {
            "no operand nets"
        } else {
            "no operand firing pins"
        };
        Entry(B::OperandBoundary, BlockStatus::Absent, why.into())
    } else {
        Entry(
            B::OperandBoundary,
            BlockStatus::Active,
            format!("{} operand pins per step", spec.operand_boundary.len()),
        )
    });

    // initial and final conditions
    let mut seen = HashSet::new();
    for c in &spec.initial {
        let v = names.primary(&layout, &c.variable)?;
        if !matches!(
            v,
            Var::Place(_) | Var::InFlight(_) | Var::OperandPlace(_) | Var::OperandInFlight(_)
        ) {
            return Err(AssemblyError::UnknownVariable(format!(
                "{} (not a marking)",
                c.variable
            )));
        }
        if !seen.insert(v) {
            return Err(AssemblyError::OverdeterminedInitialCondition(
                c.variable.clone(),
            ));
        }
        rows.push(row(B::InitialCondition, 0, &[(col(0, v), 1.0)], c.value));
    }
    entries.push(if spec.initial.is_empty() {
        Entry(
            B::InitialCondition,
            BlockStatus::Absent,
            "no initial conditions".into(),
        )
    } else {
        Entry(
            B::InitialCondition,
            BlockStatus::Active,
            "initial markings".into(),
        )
    });

    match &spec.final_conditions {
        None => entries.push(Entry(
            B::FinalCondition,
            BlockStatus::Absent,
            "initial value problem: no final conditions".into(),
        )),
        Some(list) => {
            let mut seen = HashSet::new();
            for c in list {
                let v = names.primary(&layout, &c.variable)?;
                if !matches!(
                    v,
                    Var::Place(_)
                        | Var::InFlight(_)
                        | Var::OperandPlace(_)
                        | Var::OperandInFlight(_)
                ) {
                    return Err(AssemblyError::UnknownVariable(format!(
                        "{} (not a marking)",
                        c.variable
                    )));
                }
                if !seen.insert(v) {
                    return Err(AssemblyError::OverdeterminedFinalCondition(
                        c.variable.clone(),
                    ));
                }
                rows.push(row(
                    B::FinalCondition,
                    k_max,
                    &[(col(k_max, v), 1.0)],
                    c.value,
                ));
            }
            // nothing may start at the last step
            for psi in 0..n_caps {
                rows.push(row(
                    B::FinalCondition,
                    k_max,
                    &[(col(k_max, Var::Input(psi)), 1.0)],
                    0.0,
                ));
            }
            for x in 0..op_trans {
                rows.push(row(
                    B::FinalCondition,
                    k_max,
                    &[(col(k_max, Var::OperandInput(x)), 1.0)],
                    0.0,
                ));
            }
            entries.push(Entry(
                B::FinalCondition,
                BlockStatus::Active,
                "final markings, no new firings".into(),
            ));
        }
    }

    // bounds
    let mut bounds = Vec::new();
    for b in &spec.bounds {
        let v = names.primary(&layout, &b.variable)?;
        if b.lower > b.upper || b.lower.is_nan() || b.upper.is_nan() {
            return Err(AssemblyError::InvalidBounds(b.variable.clone()));
        }
        if b.lower.is_finite() || b.upper.is_finite() {
            bounds.push((layout.offset(v).expect("resolved"), b.lower, b.upper));
        }
    }
    entries.push(if bounds.is_empty() {
        Entry(
            B::CapacityBounds,
            BlockStatus::Relaxed,
            "no bounds: lower -> -inf, upper -> +inf".into(),
        )
    } else {
        Entry(
            B::CapacityBounds,
            BlockStatus::Active,
            format!("{} bounded variables per step", bounds.len()),
        )
    });

    // device models
    let mut devices = Vec::with_capacity(spec.devices.models.len());
    for m in &spec.devices.models {
        let wrap = |e: AssemblyError| AssemblyError::Device {
            model: m.name.clone(),
            message: e.to_string(),
        };
        let target = match &m.target {
            Some(t) => {
                let s = names.resolve(&layout, t).map_err(wrap)?;
                if matches!(s, Source::Exogenous(_)) {
                    return Err(wrap(AssemblyError::UnknownVariable(format!(
                        "{t} (exogenous is not assignable)"
                    ))));
                }
                Some(s)
            }
            None => None,
        };
        if m.kind == DeviceKind::Inequality && target.is_some() {
            return Err(AssemblyError::Device {
                model: m.name.clone(),
                message: "inequalities take no target".into(),
            });
        }
        let reads = m
            .reads
            .iter()
            .map(|r| names.resolve(&layout, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(wrap)?;
        devices.push(ResolvedDevice {
            model: m.clone(),
            target,
            reads,
        });
    }
    for (block, label) in [
        (DeviceBlock::Primary, B::DeviceEquality),
        (DeviceBlock::Auxiliary, B::DeviceAuxiliary),
    ] {
        let n = devices.iter().filter(|d| d.model.block == block).count();
        entries.push(if n == 0 {
            Entry(label, BlockStatus::Absent, "no device models".into())
        } else {
            Entry(
                label,
                BlockStatus::Active,
                format!("{n} device models per step"),
            )
        });
    }

    let count = |b: ConstraintBlock| -> usize {
        match b {
            B::DeviceEquality | B::DeviceAuxiliary => {
                let want = if b == B::DeviceEquality {
                    DeviceBlock::Primary
                } else {
                    DeviceBlock::Auxiliary
                };
                devices.iter().filter(|d| d.model.block == want).count() * (k_max + 1)
            }
            B::CapacityBounds => bounds.len() * (k_max + 1),
            _ => rows.iter().filter(|r| r.block == b).count(),
        }
    };
    let mut report_entries: Vec<BlockEntry> = entries
        .into_iter()
        .map(|Entry(block, status, reason)| BlockEntry {
            block,
            status,
            reason,
            rows: 0,
        })
        .collect();
    for e in &mut report_entries {
        e.rows = count(e.block);
    }
    report_entries.sort_by_key(|e| ConstraintBlock::ALL.iter().position(|b| *b == e.block));

    Ok(HfnmcfProblem {
        layout,
        dt,
        incidence,
        durations,
        capability_ids,
        operand_nets: spec.operand_nets.clone(),
        sync,
        var_names,
        aux_names: spec.devices.aux_names.clone(),
        quadratic,
        linear,
        rows,
        devices,
        exogenous: spec.exogenous.clone(),
        bounds,
        has_final_conditions: spec.final_conditions.is_some(),
        report: CollapseReport {
            objective,
            entries: report_entries,
        },
    })
}

/// The structural report of an assembled problem.
pub fn collapse_report(problem: &HfnmcfProblem) -> &CollapseReport {
    &problem.report
}

/// Residuals of every live block.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub blocks: Vec<(ConstraintBlock, Vec<f64>)>,
}

impl Residuals {
    pub fn block(&self, b: ConstraintBlock) -> &[f64] {
        self.blocks
            .iter()
            .find(|(x, _)| *x == b)
            .map_or(&[], |(_, v)| v.as_slice())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Infinity norm per block.
    pub fn norms(&self) -> Vec<(ConstraintBlock, f64)> {
        self.blocks
            .iter()
            .map(|(b, v)| (*b, v.iter().fold(0.0f64, |m, r| m.max(r.abs()))))
            .collect()
    }
}

impl HfnmcfProblem {
    pub fn report(&self) -> &CollapseReport {
        &self.report
    }

    pub fn num_variables(&self) -> usize {
        self.layout.num_primary() + self.layout.num_auxiliary()
    }

    /// Value of a device-model input at step `k`.
    pub fn source_value(&self, k: usize, s: Source, x: &[f64], y: &[f64]) -> f64 {
        match s {
            Source::Primary(v) => {
                x[self
                    .layout
                    .col(k, v)
                    .expect("resolved sources have columns")]
            }
            Source::Aux(j) => y[k * self.layout.aux + j],
            Source::Exogenous(j) => self
                .exogenous
                .column(&self.exogenous.names()[j])
                .expect("resolved")[k],
        }
    }

    /// Device-model residual at step `k`; inequality violations are positive.
    pub fn device_residual(&self, d: &ResolvedDevice, k: usize, x: &[f64], y: &[f64]) -> f64 {
        let args: Vec<f64> = d
            .reads
            .iter()
            .map(|&s| self.source_value(k, s, x, y))
            .collect();
        let f = (d.model.eval)(&args);
        match (d.model.kind, d.target) {
            (DeviceKind::Equality, Some(t)) => self.source_value(k, t, x, y) - f,
            (DeviceKind::Equality, None) => f,
            (DeviceKind::Inequality, _) => f.max(0.0),
        }
    }

    /// Exact residuals of every active block at `(X, Y)`.
    ///
    /// Linear rows report `rhs − a·z`; equality device models report
    /// `target − f`; inequalities and bounds report their violation.
    pub fn evaluate_residuals(&self, x: &[f64], y: &[f64]) -> Result<Residuals, AssemblyError> {
        if x.len() != self.layout.num_primary() || y.len() != self.layout.num_auxiliary() {
            return Err(AssemblyError::DimMismatch(format!(
                "X has {} (want {}), Y has {} (want {})",
                x.len(),
                self.layout.num_primary(),
                y.len(),
                self.layout.num_auxiliary()
            )));
        }
        let np = x.len();
        let z = |c: usize| if c < np { x[c] } else { y[c - np] };
        let mut by_block: BTreeMap<ConstraintBlock, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|&(c, a)| a * z(c)).sum();
            by_block.entry(r.block).or_default().push(r.rhs - lhs);
        }
        if !self.bounds.is_empty() {
            let v = by_block.entry(ConstraintBlock::CapacityBounds).or_default();
            for k in 0..self.layout.steps() {
                for &(off, lo, hi) in &self.bounds {
                    let xv = x[k * self.layout.width() + off];
                    v.push((lo - xv).max(xv - hi).max(0.0));
                }
            }
        }
        for k in 0..self.layout.steps() {
            for d in &self.devices {
                let b = match d.model.block {
                    DeviceBlock::Primary => ConstraintBlock::DeviceEquality,
                    DeviceBlock::Auxiliary => ConstraintBlock::DeviceAuxiliary,
                };
                let r = self.device_residual(d, k, x, y);
                by_block.entry(b).or_default().push(r);
            }
        }
        Ok(Residuals {
            blocks: by_block.into_iter().collect(),
        })
    }

    /// Per-step columns of a solution: the step block (with `U+` alias
    /// columns when firings are consolidated), then auxiliaries.
    pub fn trajectory(&self, x: &[f64], y: &[f64]) -> Trajectory {
        let l = &self.layout;
        let mut vars = l.block_vars();
        if l.esn_consolidated {
            vars.extend((0..l.capabilities).map(Var::Output));
        }
        if l.operand_consolidated {
            vars.extend((0..l.operand_transitions).map(Var::OperandOutput));
        }
        let mut names: Vec<String> = Vec::with_capacity(vars.len() + l.aux);
        for v in &vars {
            names.push(self.var_label(*v));
        }
        names.extend(self.aux_names.iter().cloned());
        let mut columns: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| {
                (0..l.steps())
                    .map(|k| x[l.col(k, v).expect("layout var")])
                    .collect()
            })
            .collect();
        for j in 0..l.aux {
            columns.push((0..l.steps()).map(|k| y[k * l.aux + j]).collect());
        }
        Trajectory::from_columns(self.dt, names, columns)
    }

    pub fn var_label(&self, v: Var) -> String {
        match v {
            Var::Output(i) if self.layout.esn_consolidated => {
                format!("U+:{}", self.capability_ids[i])
            }
            Var::OperandOutput(i) if self.layout.operand_consolidated => {
                let base = &self.var_names[self
                    .layout
                    .offset(Var::OperandInput(i))
                    .expect("layout var")];
                base.replacen("U-L:", "U+L:", 1)
            }
            _ => self.var_names[self.layout.offset(v).expect("layout var")].clone(),
        }
    }
}
