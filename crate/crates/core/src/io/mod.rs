//! Declarative model documents.
//!
//! One JSON document per file, tagged with `kind` and `version`:
//!
//! | kind          | body                                                    |
//! |---------------|---------------------------------------------------------|
//! | `hfgt-system` | operands, resources, processes, capabilities            |
//! | `stockflow`   | stocks, flows with rate expressions, auxiliaries, tracks |
//! | `hfnmcf-spec` | an inline system plus horizon, pins, conditions, bounds and a device-model set |
//! | `markov-spec` | per-track states, transition matrix, initial state      |
//!
//! Parsing never panics: it returns a document or a nonempty list of
//! [`Diagnostic`]s, each with a JSON path and a line/column. Unknown fields
//! are errors in [`ParseMode::Strict`] and warnings in
//! [`ParseMode::Lenient`]. [`serialize`] writes the canonical form.

pub mod json;

use std::collections::BTreeMap;
use std::fmt;

use json::{Node, Value};

use crate::expr::parse_expr;
use crate::hfnmcf::{
    device_set, Bound, BoundaryPin, Condition, DeviceParams, HfnmcfSpec, Objective, OperandPin,
    PinValue, Side, SyncLink,
};
use crate::incidence::IncidenceMatrices;
use crate::markov::{MarkovSpec, MarkovTrack};
use crate::model::{
    build_system, Capability, Operand, OperandFlow, Process, ProcessKind, Resource, ResourceKind,
    SystemModel,
};
use crate::nets::OperandNet;
use crate::sd::{
    AuxDef, Auxiliary, Endpoint, ExoSource, ExoTrack, Flow, Lookup, Stock, StockFlowModel,
};
use crate::series::SeriesTable;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// JSON path such as `$.flows[2].rate`.
    pub path: String,
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub code: &'static str,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}[{}] {}: {}",
            self.line, self.col, self.code, self.path, self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    HfgtSystem,
    StockFlow,
    HfnmcfSpec,
    MarkovSpec,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 4] = [
        DocumentKind::HfgtSystem,
        DocumentKind::StockFlow,
        DocumentKind::HfnmcfSpec,
        DocumentKind::MarkovSpec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocumentKind::HfgtSystem => "hfgt-system",
            DocumentKind::StockFlow => "stockflow",
            DocumentKind::HfnmcfSpec => "hfnmcf-spec",
            DocumentKind::MarkovSpec => "markov-spec",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Plain-data view of a system model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDoc {
    pub operands: Vec<Operand>,
    pub resources: Vec<Resource>,
    pub processes: Vec<Process>,
    pub capabilities: Vec<Capability>,
}

impl SystemDoc {
    pub fn from_model(m: &SystemModel) -> Self {
        Self {
            operands: m.operands().to_vec(),
            resources: m.resources().to_vec(),
            processes: m.processes().to_vec(),
            capabilities: m.capabilities().to_vec(),
        }
    }

    pub fn to_model(&self) -> Result<SystemModel, crate::model::ModelError> {
        build_system(
            self.operands.clone(),
            self.resources.clone(),
            self.processes.clone(),
            self.capabilities.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperandNetDoc {
    pub operand: String,
    pub places: Vec<String>,
    pub transitions: Vec<String>,
    pub m_plus: Vec<Vec<f64>>,
    pub m_minus: Vec<Vec<f64>>,
    pub durations: Vec<usize>,
    pub initial: Vec<f64>,
}

impl OperandNetDoc {
    pub fn to_net(&self) -> Result<OperandNet, String> {
        let inc = IncidenceMatrices::from_dense(&self.m_plus, &self.m_minus)
            .map_err(|e| e.to_string())?;
        OperandNet::new(
            self.operand.clone(),
            self.places.clone(),
            self.transitions.clone(),
            inc,
            self.durations.clone(),
            self.initial.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

/// Registered device-model set and its parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceRef {
    pub set: String,
    pub params: DeviceParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecDoc {
    pub system: SystemDoc,
    pub horizon: usize,
    pub dt: f64,
    pub place_names: Option<Vec<String>>,
    pub objective: Objective,
    /// Inline exogenous tracks, in file order.
    pub exogenous: Vec<(String, Vec<f64>)>,
    pub boundary: Vec<BoundaryPin>,
    pub operand_nets: Vec<OperandNetDoc>,
    pub sync: Vec<SyncLink>,
    pub operand_boundary: Vec<OperandPin>,
    pub initial: Vec<Condition>,
    pub final_conditions: Option<Vec<Condition>>,
    pub bounds: Vec<Bound>,
    pub devices: DeviceRef,
}

impl SpecDoc {
    /// Builds the system and the specification. `exogenous` replaces or adds
    /// tracks by name; `horizon` overrides the document's.
    pub fn build(
        &self,
        exogenous: Option<&SeriesTable>,
        horizon: Option<usize>,
    ) -> Result<(SystemModel, HfnmcfSpec), String> {
        let model = self.system.to_model().map_err(|e| e.to_string())?;
        let mut spec = HfnmcfSpec::new(horizon.unwrap_or(self.horizon), self.dt);
        spec.place_names = self.place_names.clone();
        spec.objective = self.objective.clone();
        let mut tracks: Vec<(String, Vec<f64>)> = self.exogenous.clone();
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
        spec.exogenous = SeriesTable::new(names, cols);
        spec.boundary = self.boundary.clone();
        spec.operand_nets = self
            .operand_nets
            .iter()
            .map(OperandNetDoc::to_net)
            .collect::<Result<_, _>>()?;
        spec.sync = self.sync.clone();
        spec.operand_boundary = self.operand_boundary.clone();
        spec.initial = self.initial.clone();
        spec.final_conditions = self.final_conditions.clone();
        spec.bounds = self.bounds.clone();
        spec.devices = device_set(&self.devices.set, &self.devices.params)?;
        Ok((model, spec))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    HfgtSystem(SystemDoc),
    StockFlow(StockFlowModel),
    HfnmcfSpec(Box<SpecDoc>),
    MarkovSpec(MarkovSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub version: u64,
    pub body: Body,
}

impl ModelDocument {
    pub fn new(body: Body) -> Self {
        Self {
            version: FORMAT_VERSION,
            body,
        }
    }

    pub fn kind(&self) -> DocumentKind {
        match self.body {
            Body::HfgtSystem(_) => DocumentKind::HfgtSystem,
            Body::StockFlow(_) => DocumentKind::StockFlow,
            Body::HfnmcfSpec(_) => DocumentKind::HfnmcfSpec,
            Body::MarkovSpec(_) => DocumentKind::MarkovSpec,
        }
    }
}

// ---------------------------------------------------------------- reading

struct Ctx {
    mode: ParseMode,
    diags: Vec<Diagnostic>,
}

#[derive(Clone, Copy)]
struct At<'a> {
    node: &'a Node,
}

impl Ctx {
    fn push(
        &mut self,
        severity: Severity,
        node: &Node,
        path: &str,
        code: &'static str,
        message: impl Into<String>,
    ) {
        self.diags.push(Diagnostic {
            severity,
            path: path.to_string(),
            line: node.line,
            col: node.col,
            message: message.into(),
            code,
        });
    }

    fn error(&mut self, node: &Node, path: &str, code: &'static str, message: impl Into<String>) {
        self.push(Severity::Error, node, path, code, message);
    }

    fn type_error(&mut self, node: &Node, path: &str, want: &str) {
        self.error(
            node,
            path,
            "type",
            format!("expected {want}, found {}", node.type_name()),
        );
    }

    fn has_errors(&self) -> bool {
        self.diags.iter().any(|d| d.severity == Severity::Error)
    }

    /// Checks that `node` is an object and reports fields outside `allowed`.
    fn object<'a>(&mut self, node: &'a Node, path: &str, allowed: &[&str]) -> Option<At<'a>> {
        let Value::Object(fields) = &node.value else {
            self.type_error(node, path, "an object");
            return None;
        };
        for (k, v) in fields {
            if !allowed.contains(&k.as_str()) {
                let sev = match self.mode {
                    ParseMode::Strict => Severity::Error,
                    ParseMode::Lenient => Severity::Warning,
                };
                self.push(
                    sev,
                    v,
                    &format!("{path}.{k}"),
                    "unknown-field",
                    format!("unknown field `{k}`"),
                );
            }
        }
        Some(At { node })
    }

    fn req<'a>(&mut self, o: At<'a>, path: &str, key: &str) -> Option<&'a Node> {
        let v = o.node.get(key);
        if v.is_none() {
            self.error(
                o.node,
                path,
                "missing-field",
                format!("missing field `{key}`"),
            );
        }
        v
    }

    fn num(&mut self, n: &Node, path: &str) -> Option<f64> {
        match n.value {
            Value::Number(v) => Some(v),
            _ => {
                self.type_error(n, path, "a number");
                None
            }
        }
    }

    fn num_or_null(&mut self, n: &Node, path: &str, null: f64) -> Option<f64> {
        match n.value {
            Value::Null => Some(null),
            _ => self.num(n, path),
        }
    }

    fn uint(&mut self, n: &Node, path: &str) -> Option<usize> {
        let v = self.num(n, path)?;
        if v >= 0.0 && v == v.trunc() && v <= u32::MAX as f64 {
            Some(v as usize)
        } else {
            self.error(
                n,
                path,
                "value",
                format!("expected a nonnegative integer, found {v}"),
            );
            None
        }
    }

    fn string(&mut self, n: &Node, path: &str) -> Option<String> {
        match &n.value {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.type_error(n, path, "a string");
                None
            }
        }
    }

    fn boolean(&mut self, n: &Node, path: &str) -> Option<bool> {
        match n.value {
            Value::Bool(b) => Some(b),
            _ => {
                self.type_error(n, path, "a boolean");
                None
            }
        }
    }

    fn array<'a>(&mut self, n: &'a Node, path: &str) -> Option<&'a [Node]> {
        match &n.value {
            Value::Array(items) => Some(items),
            _ => {
                self.type_error(n, path, "an array");
                None
            }
        }
    }

    /// Maps every element, reporting all failures rather than the first.
    fn list<'a, T>(
        &mut self,
        n: &'a Node,
        path: &str,
        mut f: impl FnMut(&mut Self, &'a Node, &str) -> Option<T>,
    ) -> Option<Vec<T>> {
        let items = self.array(n, path)?;
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match f(self, item, &format!("{path}[{i}]")) {
                Some(v) => out.push(v),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn nums(&mut self, n: &Node, path: &str) -> Option<Vec<f64>> {
        self.list(n, path, |c, n, p| c.num(n, p))
    }

    fn strings(&mut self, n: &Node, path: &str) -> Option<Vec<String>> {
        self.list(n, path, |c, n, p| c.string(n, p))
    }

    fn matrix(&mut self, n: &Node, path: &str) -> Option<Vec<Vec<f64>>> {
        self.list(n, path, |c, n, p| c.nums(n, p))
    }

    fn field<T>(
        &mut self,
        o: At<'_>,
        path: &str,
        key: &str,
        f: impl FnOnce(&mut Self, &Node, &str) -> Option<T>,
    ) -> Option<T> {
        let n = self.req(o, path, key)?;
        f(self, n, &format!("{path}.{key}"))
    }

    fn opt_field<T>(
        &mut self,
        o: At<'_>,
        path: &str,
        key: &str,
        f: impl FnOnce(&mut Self, &Node, &str) -> Option<T>,
    ) -> Option<Option<T>> {
        match o.node.get(key) {
            None => Some(None),
            Some(n) => f(self, n, &format!("{path}.{key}")).map(Some),
        }
    }
}

fn read_system(c: &mut Ctx, n: &Node, path: &str, extra: &[&str]) -> Option<SystemDoc> {
    let mut allowed = vec!["operands", "resources", "processes", "capabilities"];
    allowed.extend_from_slice(extra);
    let o = c.object(n, path, &allowed)?;
    let operands = c.field(o, path, "operands", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["id", "name", "state_net"])?;
            let id = c.field(o, p, "id", Ctx::string);
            let name = c.opt_field(o, p, "name", Ctx::string);
            let state_net = c.opt_field(o, p, "state_net", Ctx::boolean);
            let id = id?;
            Some(Operand {
                name: name?.unwrap_or_else(|| id.clone()),
                id,
                has_state_net: state_net?.unwrap_or(false),
            })
        })
    });
    let resources = c.field(o, path, "resources", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["id", "name", "kind"])?;
            let id = c.field(o, p, "id", Ctx::string);
            let name = c.opt_field(o, p, "name", Ctx::string);
            let kind = c.field(o, p, "kind", |c, n, p| {
                let s = c.string(n, p)?;
                let k = match s.as_str() {
                    "transformation" => ResourceKind::Transformation,
                    "independent-buffer" => ResourceKind::IndependentBuffer,
                    "transportation" => ResourceKind::Transportation,
                    _ => {
                        c.error(n, p, "value", format!("unknown resource kind `{s}`"));
                        return None;
                    }
                };
                Some(k)
            });
            let id = id?;
            Some(Resource {
                name: name?.unwrap_or_else(|| id.clone()),
                id,
                kind: kind?,
            })
        })
    });
    let flows = |c: &mut Ctx, n: &Node, p: &str| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["operand", "quantity"])?;
            let operand = c.field(o, p, "operand", Ctx::string);
            let quantity = c.opt_field(o, p, "quantity", Ctx::num);
            Some(OperandFlow {
                operand: operand?,
                quantity: quantity?.unwrap_or(1.0),
            })
        })
    };
    let processes = c.field(o, path, "processes", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["id", "name", "kind", "inputs", "outputs"])?;
            let id = c.field(o, p, "id", Ctx::string);
            let name = c.opt_field(o, p, "name", Ctx::string);
            let kind = c.field(o, p, "kind", |c, n, p| {
                let s = c.string(n, p)?;
                match s.as_str() {
                    "transformation" => Some(ProcessKind::Transformation),
                    "transportation" => Some(ProcessKind::RefinedTransportation),
                    _ => {
                        c.error(n, p, "value", format!("unknown process kind `{s}`"));
                        None
                    }
                }
            });
            let inputs = c.opt_field(o, p, "inputs", flows);
            let outputs = c.opt_field(o, p, "outputs", flows);
            let id = id?;
            Some(Process {
                name: name?.unwrap_or_else(|| id.clone()),
                id,
                kind: kind?,
                inputs: inputs?.unwrap_or_default(),
                outputs: outputs?.unwrap_or_default(),
            })
        })
    });
    let capabilities = c.field(o, path, "capabilities", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(
                n,
                p,
                &[
                    "id",
                    "resource",
                    "process",
                    "origin",
                    "destination",
                    "duration",
                ],
            )?;
            let id = c.field(o, p, "id", Ctx::string);
            let resource = c.field(o, p, "resource", Ctx::string);
            let process = c.field(o, p, "process", Ctx::string);
            let origin = c.field(o, p, "origin", Ctx::string);
            let destination = c.field(o, p, "destination", Ctx::string);
            let duration = c.opt_field(o, p, "duration", Ctx::uint);
            Some(Capability {
                id: id?,
                resource: resource?,
                process: process?,
                origin: origin?,
                destination: destination?,
                duration: duration?.unwrap_or(0),
            })
        })
    });
    let doc = SystemDoc {
        operands: operands?,
        resources: resources?,
        processes: processes?,
        capabilities: capabilities?,
    };
    if let Err(e) = doc.to_model() {
        c.error(n, path, "invalid-model", e.to_string());
        return None;
    }
    Some(doc)
}

fn read_expr(c: &mut Ctx, n: &Node, path: &str) -> Option<crate::expr::Expr> {
    let s = c.string(n, path)?;
    match parse_expr(&s) {
        Ok(e) if e.all_literals_finite() => Some(e),
        Ok(_) => {
            c.error(n, path, "expression", "literal out of range");
            None
        }
        Err(e) => {
            // the opening quote precedes the expression text
            let at = Node {
                value: Value::Null,
                line: n.line,
                col: n.col + 1 + s[..e.offset.min(s.len())].chars().count(),
            };
            c.error(&at, path, "expression", e.message);
            None
        }
    }
}

fn read_endpoint(c: &mut Ctx, n: &Node, path: &str) -> Option<Endpoint> {
    match &n.value {
        Value::Null => Some(Endpoint::Boundary),
        Value::String(s) => Some(Endpoint::Stock(s.clone())),
        _ => {
            c.type_error(n, path, "a stock name or null (boundary)");
            None
        }
    }
}

fn read_stockflow(c: &mut Ctx, o: At<'_>, root: &Node) -> Option<StockFlowModel> {
    let p = "$";
    let stocks = c.field(o, p, "stocks", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["name", "initial", "units"])?;
            let name = c.field(o, p, "name", Ctx::string);
            let initial = c.field(o, p, "initial", Ctx::num);
            let units = c.opt_field(o, p, "units", Ctx::string);
            Some(Stock {
                name: name?,
                initial: initial?,
                units: units?.unwrap_or_default(),
            })
        })
    });
    let flows = c.field(o, p, "flows", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["name", "from", "to", "rate"])?;
            let name = c.field(o, p, "name", Ctx::string);
            let from = c.field(o, p, "from", read_endpoint);
            let to = c.field(o, p, "to", read_endpoint);
            let rate = c.field(o, p, "rate", read_expr);
            Some(Flow {
                name: name?,
                from: from?,
                to: to?,
                rate: rate?,
            })
        })
    });
    let auxiliaries = c.opt_field(o, p, "auxiliaries", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["name", "expr", "lookup"])?;
            let name = c.field(o, p, "name", Ctx::string);
            let def = match (o.node.get("expr"), o.node.get("lookup")) {
                (Some(e), None) => read_expr(c, e, &format!("{p}.expr")).map(AuxDef::Expr),
                (None, Some(l)) => {
                    let lp = format!("{p}.lookup");
                    let lo = c.object(l, &lp, &["input", "points"])?;
                    let input = c.field(lo, &lp, "input", Ctx::string);
                    let points = c.field(lo, &lp, "points", |c, n, p| {
                        c.list(n, p, |c, n, p| {
                            let v = c.nums(n, p)?;
                            if v.len() != 2 {
                                c.error(n, p, "value", "lookup points are [input, output] pairs");
                                return None;
                            }
                            Some((v[0], v[1]))
                        })
                    });
                    Some(AuxDef::Lookup(Lookup {
                        input: input?,
                        points: points?,
                    }))
                }
                _ => {
                    c.error(
                        n,
                        p,
                        "value",
                        "auxiliary needs exactly one of `expr` or `lookup`",
                    );
                    None
                }
            };
            Some(Auxiliary {
                name: name?,
                def: def?,
            })
        })
    });
    let exogenous = c.opt_field(o, p, "exogenous", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["name", "constant", "series"])?;
            let name = c.field(o, p, "name", Ctx::string);
            let source = match (o.node.get("constant"), o.node.get("series")) {
                (Some(v), None) => c.num(v, &format!("{p}.constant")).map(ExoSource::Constant),
                (None, Some(v)) => c.nums(v, &format!("{p}.series")).map(ExoSource::Series),
                _ => {
                    c.error(
                        n,
                        p,
                        "value",
                        "exogenous track needs exactly one of `constant` or `series`",
                    );
                    None
                }
            };
            Some(ExoTrack {
                name: name?,
                source: source?,
            })
        })
    });
    let dt = c.opt_field(o, p, "dt", Ctx::num);
    let horizon = c.field(o, p, "horizon", Ctx::uint);
    let model = StockFlowModel {
        stocks: stocks?,
        flows: flows?,
        auxiliaries: auxiliaries?.unwrap_or_default(),
        exogenous: exogenous?.unwrap_or_default(),
        dt: dt?.unwrap_or(1.0),
        horizon: horizon?,
    };
    // structural check; series lengths are checked when the model runs
    let mut probe = model.clone();
    probe.horizon = 0;
    for t in &mut probe.exogenous {
        t.source = ExoSource::Constant(0.0);
    }
    if let Err(e) = probe.compile() {
        c.error(root, p, "invalid-model", e.to_string());
        return None;
    }
    Some(model)
}

fn read_side(c: &mut Ctx, n: &Node, path: &str) -> Option<Side> {
    let s = c.string(n, path)?;
    match s.as_str() {
        "input" => Some(Side::Input),
        "output" => Some(Side::Output),
        _ => {
            c.error(
                n,
                path,
                "value",
                format!("side must be `input` or `output`, found `{s}`"),
            );
            None
        }
    }
}

fn read_pin_value(c: &mut Ctx, n: &Node, path: &str) -> Option<PinValue> {
    match &n.value {
        Value::Number(v) => Some(PinValue::Constant(*v)),
        Value::String(s) => Some(PinValue::Track(s.clone())),
        Value::Array(_) => c.nums(n, path).map(PinValue::Values),
        _ => {
            c.type_error(n, path, "a number, a track name or an array");
            None
        }
    }
}

fn read_conditions(c: &mut Ctx, n: &Node, path: &str) -> Option<Vec<Condition>> {
    c.list(n, path, |c, n, p| {
        let o = c.object(n, p, &["variable", "value"])?;
        let variable = c.field(o, p, "variable", Ctx::string);
        let value = c.field(o, p, "value", Ctx::num);
        Some(Condition {
            variable: variable?,
            value: value?,
        })
    })
}

fn read_spec(c: &mut Ctx, o: At<'_>, root: &Node) -> Option<SpecDoc> {
    let p = "$";
    let system = c.field(o, p, "system", |c, n, p| read_system(c, n, p, &[]));
    let horizon = c.field(o, p, "horizon", Ctx::uint);
    let dt = c.opt_field(o, p, "dt", Ctx::num);
    let place_names = c.opt_field(o, p, "place_names", Ctx::strings);
    let objective = c.opt_field(o, p, "objective", |c, n, p| {
        let o = c.object(n, p, &["quadratic", "linear"])?;
        let linear = c.opt_field(o, p, "linear", Ctx::nums)?.unwrap_or_default();
        let quadratic = match o.node.get("quadratic") {
            None => Some(vec![]),
            Some(q) => {
                let qp = format!("{p}.quadratic");
                match &q.value {
                    Value::Array(items)
                        if items.iter().any(|i| matches!(i.value, Value::Array(_))) =>
                    {
                        let m = c.matrix(q, &qp)?;
                        match Objective::from_matrix(&m, vec![]) {
                            Ok(obj) => Some(obj.quadratic),
                            Err(e) => {
                                c.error(q, &qp, "value", e.to_string());
                                None
                            }
                        }
                    }
                    _ => c.nums(q, &qp),
                }
            }
        };
        let quadratic = quadratic?;
        if let Some(i) = quadratic.iter().position(|v| *v < 0.0) {
            c.error(
                n,
                p,
                "value",
                format!("quadratic cost entry {i} is negative"),
            );
            return None;
        }
        Some(Objective { quadratic, linear })
    });
    let exogenous = c.opt_field(o, p, "exogenous", |c, n, p| {
        let Value::Object(fields) = &n.value else {
            c.type_error(n, p, "an object of named tracks");
            return None;
        };
        let mut out = Vec::new();
        let mut ok = true;
        for (k, v) in fields {
            match c.nums(v, &format!("{p}.{k}")) {
                Some(vals) => out.push((k.clone(), vals)),
                None => ok = false,
            }
        }
        ok.then_some(out)
    });
    let boundary = c.opt_field(o, p, "boundary", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["capability", "side", "value"])?;
            let capability = c.field(o, p, "capability", Ctx::string);
            let side = c.opt_field(o, p, "side", read_side);
            let value = c.field(o, p, "value", read_pin_value);
            Some(BoundaryPin {
                capability: capability?,
                side: side?.unwrap_or(Side::Input),
                value: value?,
            })
        })
    });
    let operand_nets = c.opt_field(o, p, "operand_nets", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(
                n,
                p,
                &[
                    "operand",
                    "places",
                    "transitions",
                    "m_plus",
                    "m_minus",
                    "durations",
                    "initial",
                ],
            )?;
            let operand = c.field(o, p, "operand", Ctx::string);
            let places = c.field(o, p, "places", Ctx::strings);
            let transitions = c.field(o, p, "transitions", Ctx::strings);
            let m_plus = c.field(o, p, "m_plus", Ctx::matrix);
            let m_minus = c.field(o, p, "m_minus", Ctx::matrix);
            let durations = c.opt_field(o, p, "durations", |c, n, p| c.list(n, p, Ctx::uint));
            let initial = c.opt_field(o, p, "initial", Ctx::nums);
            let transitions = transitions?;
            let places = places?;
            let doc = OperandNetDoc {
                operand: operand?,
                durations: durations?.unwrap_or_else(|| vec![0; transitions.len()]),
                initial: initial?.unwrap_or_else(|| vec![0.0; places.len()]),
                places,
                transitions,
                m_plus: m_plus?,
                m_minus: m_minus?,
            };
            if let Err(e) = doc.to_net() {
                c.error(n, p, "invalid-model", e);
                return None;
            }
            Some(doc)
        })
    });
    let sync = c.opt_field(o, p, "sync", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["operand_transition", "capability"])?;
            let t = c.field(o, p, "operand_transition", Ctx::string);
            let cap = c.field(o, p, "capability", Ctx::string);
            Some(SyncLink {
                operand_transition: t?,
                capability: cap?,
            })
        })
    });
    let operand_boundary = c.opt_field(o, p, "operand_boundary", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["transition", "side", "value"])?;
            let transition = c.field(o, p, "transition", Ctx::string);
            let side = c.opt_field(o, p, "side", read_side);
            let value = c.field(o, p, "value", read_pin_value);
            Some(OperandPin {
                transition: transition?,
                side: side?.unwrap_or(Side::Input),
                value: value?,
            })
        })
    });
    let initial = c.opt_field(o, p, "initial", read_conditions);
    let final_conditions = c.opt_field(o, p, "final", read_conditions);
    let bounds = c.opt_field(o, p, "bounds", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["variable", "lower", "upper"])?;
            let variable = c.field(o, p, "variable", Ctx::string);
            let lower = c.opt_field(o, p, "lower", |c, n, p| {
                c.num_or_null(n, p, f64::NEG_INFINITY)
            });
            let upper = c.opt_field(o, p, "upper", |c, n, p| c.num_or_null(n, p, f64::INFINITY));
            let b = Bound {
                variable: variable?,
                lower: lower?.unwrap_or(f64::NEG_INFINITY),
                upper: upper?.unwrap_or(f64::INFINITY),
            };
            if b.lower > b.upper {
                c.error(n, p, "value", "lower bound exceeds upper bound");
                return None;
            }
            Some(b)
        })
    });
    let devices = c.opt_field(o, p, "device_models", |c, n, p| {
        let o = c.object(n, p, &["set", "params"])?;
        let set = c.field(o, p, "set", Ctx::string);
        let params = c.opt_field(o, p, "params", |c, n, p| {
            let Value::Object(fields) = &n.value else {
                c.type_error(n, p, "an object of numbers");
                return None;
            };
            let mut m = BTreeMap::new();
            let mut ok = true;
            for (k, v) in fields {
                match c.num(v, &format!("{p}.{k}")) {
                    Some(x) => {
                        m.insert(k.clone(), x);
                    }
                    None => ok = false,
                }
            }
            ok.then_some(m)
        });
        let d = DeviceRef {
            set: set?,
            params: params?.unwrap_or_default(),
        };
        if let Err(e) = device_set(&d.set, &d.params) {
            c.error(n, p, "device-models", e);
            return None;
        }
        Some(d)
    });
    let dt = dt?.unwrap_or(1.0);
    if !(dt > 0.0) {
        c.error(root, "$.dt", "value", "dt must be positive");
        return None;
    }
    Some(SpecDoc {
        system: system?,
        horizon: horizon?,
        dt,
        place_names: place_names?,
        objective: objective?.unwrap_or_default(),
        exogenous: exogenous?.unwrap_or_default(),
        boundary: boundary?.unwrap_or_default(),
        operand_nets: operand_nets?.unwrap_or_default(),
        sync: sync?.unwrap_or_default(),
        operand_boundary: operand_boundary?.unwrap_or_default(),
        initial: initial?.unwrap_or_default(),
        final_conditions: final_conditions?,
        bounds: bounds?.unwrap_or_default(),
        devices: devices?.unwrap_or_else(|| DeviceRef {
            set: "none".into(),
            params: BTreeMap::new(),
        }),
    })
}

fn read_markov(c: &mut Ctx, o: At<'_>) -> Option<MarkovSpec> {
    let tracks = c.field(o, "$", "tracks", |c, n, p| {
        c.list(n, p, |c, n, p| {
            let o = c.object(n, p, &["name", "states", "transition", "initial"])?;
            let name = c.field(o, p, "name", Ctx::string);
            let states = c.field(o, p, "states", Ctx::nums);
            let transition = c.field(o, p, "transition", Ctx::matrix);
            let initial = c.opt_field(o, p, "initial", Ctx::uint);
            let t = MarkovTrack {
                name: name?,
                states: states?,
                transition: transition?,
                initial: initial?.unwrap_or(0),
            };
            if let Err(e) = t.validate() {
                c.error(n, p, "invalid-model", e.to_string());
                return None;
            }
            Some(t)
        })
    });
    Some(MarkovSpec { tracks: tracks? })
}

/// Parses a document. On success, the second element holds warnings.
pub fn parse(
    text: &str,
    hint: Option<DocumentKind>,
    mode: ParseMode,
) -> Result<(ModelDocument, Vec<Diagnostic>), Vec<Diagnostic>> {
    let root = match json::parse(text) {
        Ok(n) => n,
        Err(e) => {
            let (code, message) = if e.message == "empty document" {
                ("missing-kind", "missing kind: empty document".to_string())
            } else {
                ("syntax", e.message)
            };
            return Err(vec![Diagnostic {
                severity: Severity::Error,
                path: "$".into(),
                line: e.line,
                col: e.col,
                message,
                code,
            }]);
        }
    };
    let mut c = Ctx {
        mode,
        diags: Vec::new(),
    };
    let doc = read_document(&mut c, &root, hint);
    match doc {
        Some(d) if !c.has_errors() => Ok((d, c.diags)),
        _ => {
            if !c.has_errors() {
                c.error(&root, "$", "invalid", "document rejected");
            }
            Err(c.diags)
        }
    }
}

fn read_document(c: &mut Ctx, root: &Node, hint: Option<DocumentKind>) -> Option<ModelDocument> {
    if !matches!(root.value, Value::Object(_)) {
        c.type_error(root, "$", "a document object");
        return None;
    }
    let kind = match root.get("kind") {
        None => {
            c.error(root, "$", "missing-kind", "missing kind");
            return None;
        }
        Some(n) => {
            let s = c.string(n, "$.kind")?;
            match DocumentKind::from_name(&s) {
                Some(k) => k,
                None => {
                    c.error(n, "$.kind", "unknown-kind", format!("unknown kind `{s}`"));
                    return None;
                }
            }
        }
    };
    if let Some(h) = hint {
        if h != kind {
            c.error(
                root,
                "$.kind",
                "wrong-kind",
                format!(
                    "expected a `{}` document, found `{}`",
                    h.as_str(),
                    kind.as_str()
                ),
            );
            return None;
        }
    }
    let version = match root.get("version") {
        None => {
            c.error(root, "$", "missing-field", "missing field `version`");
            return None;
        }
        Some(n) => {
            let v = c.uint(n, "$.version")? as u64;
            if v != FORMAT_VERSION {
                c.error(
                    n,
                    "$.version",
                    "unsupported-version",
                    format!("version {v} is not supported (expected {FORMAT_VERSION})"),
                );
                return None;
            }
            v
        }
    };
    let body = match kind {
        DocumentKind::HfgtSystem => {
            Body::HfgtSystem(read_system(c, root, "$", &["kind", "version"])?)
        }
        DocumentKind::StockFlow => {
            let o = c.object(
                root,
                "$",
                &[
                    "kind",
                    "version",
                    "stocks",
                    "flows",
                    "auxiliaries",
                    "exogenous",
                    "dt",
                    "horizon",
                ],
            )?;
            Body::StockFlow(read_stockflow(c, o, root)?)
        }
        DocumentKind::HfnmcfSpec => {
            let o = c.object(
                root,
                "$",
                &[
                    "kind",
                    "version",
                    "system",
                    "horizon",
                    "dt",
                    "place_names",
                    "objective",
                    "exogenous",
                    "boundary",
                    "operand_nets",
                    "sync",
                    "operand_boundary",
                    "initial",
                    "final",
                    "bounds",
                    "device_models",
                ],
            )?;
            Body::HfnmcfSpec(Box::new(read_spec(c, o, root)?))
        }
        DocumentKind::MarkovSpec => {
            let o = c.object(root, "$", &["kind", "version", "tracks"])?;
            Body::MarkovSpec(read_markov(c, o)?)
        }
    };
    Some(ModelDocument { version, body })
}

// ---------------------------------------------------------------- writing

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot serialize: {0}")]
pub struct SerializeError(pub String);

fn node(v: Value) -> Node {
    Node::new(v)
}

fn num(v: f64) -> Node {
    node(Value::Number(v))
}

fn text(s: &str) -> Node {
    node(Value::String(s.to_string()))
}

fn nums(v: &[f64]) -> Node {
    node(Value::Array(v.iter().map(|&x| num(x)).collect()))
}

fn texts(v: &[String]) -> Node {
    node(Value::Array(v.iter().map(|s| text(s)).collect()))
}

fn list<T>(items: &[T], f: impl Fn(&T) -> Node) -> Node {
    node(Value::Array(items.iter().map(f).collect()))
}

fn obj(fields: Vec<(&str, Node)>) -> Node {
    node(Value::Object(
        fields
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    ))
}

fn bound(v: f64) -> Node {
    if v.is_infinite() {
        node(Value::Null)
    } else {
        num(v)
    }
}

fn system_fields(s: &SystemDoc) -> Vec<(&'static str, Node)> {
    let flows = |f: &[OperandFlow]| {
        list(f, |f| {
            obj(vec![
                ("operand", text(&f.operand)),
                ("quantity", num(f.quantity)),
            ])
        })
    };
    vec![
        (
            "operands",
            list(&s.operands, |o| {
                obj(vec![
                    ("id", text(&o.id)),
                    ("name", text(&o.name)),
                    ("state_net", node(Value::Bool(o.has_state_net))),
                ])
            }),
        ),
        (
            "resources",
            list(&s.resources, |r| {
                let kind = match r.kind {
                    ResourceKind::Transformation => "transformation",
                    ResourceKind::IndependentBuffer => "independent-buffer",
                    ResourceKind::Transportation => "transportation",
                };
                obj(vec![
                    ("id", text(&r.id)),
                    ("name", text(&r.name)),
                    ("kind", text(kind)),
                ])
            }),
        ),
        (
            "processes",
            list(&s.processes, |p| {
                let kind = match p.kind {
                    ProcessKind::Transformation => "transformation",
                    ProcessKind::RefinedTransportation => "transportation",
                };
                obj(vec![
                    ("id", text(&p.id)),
                    ("name", text(&p.name)),
                    ("kind", text(kind)),
                    ("inputs", flows(&p.inputs)),
                    ("outputs", flows(&p.outputs)),
                ])
            }),
        ),
        (
            "capabilities",
            list(&s.capabilities, |c| {
                obj(vec![
                    ("id", text(&c.id)),
                    ("resource", text(&c.resource)),
                    ("process", text(&c.process)),
                    ("origin", text(&c.origin)),
                    ("destination", text(&c.destination)),
                    ("duration", num(c.duration as f64)),
                ])
            }),
        ),
    ]
}

fn side(s: Side) -> Node {
    text(match s {
        Side::Input => "input",
        Side::Output => "output",
    })
}

fn pin_value(v: &PinValue) -> Node {
    match v {
        PinValue::Constant(c) => num(*c),
        PinValue::Track(t) => text(t),
        PinValue::Values(v) => nums(v),
    }
}

fn conditions(c: &[Condition]) -> Node {
    list(c, |c| {
        obj(vec![
            ("variable", text(&c.variable)),
            ("value", num(c.value)),
        ])
    })
}

fn endpoint(e: &Endpoint) -> Node {
    match e {
        Endpoint::Boundary => node(Value::Null),
        Endpoint::Stock(s) => text(s),
    }
}

fn to_tree(doc: &ModelDocument) -> Node {
    let mut fields: Vec<(&str, Node)> = vec![
        ("kind", text(doc.kind().as_str())),
        ("version", num(doc.version as f64)),
    ];
    match &doc.body {
        Body::HfgtSystem(s) => fields.extend(system_fields(s)),
        Body::StockFlow(m) => {
            fields.push((
                "stocks",
                list(&m.stocks, |s| {
                    obj(vec![
                        ("name", text(&s.name)),
                        ("initial", num(s.initial)),
                        ("units", text(&s.units)),
                    ])
                }),
            ));
            fields.push((
                "flows",
                list(&m.flows, |f| {
                    obj(vec![
                        ("name", text(&f.name)),
                        ("from", endpoint(&f.from)),
                        ("to", endpoint(&f.to)),
                        ("rate", text(&f.rate.to_string())),
                    ])
                }),
            ));
            fields.push((
                "auxiliaries",
                list(&m.auxiliaries, |a| match &a.def {
                    AuxDef::Expr(e) => obj(vec![
                        ("name", text(&a.name)),
                        ("expr", text(&e.to_string())),
                    ]),
                    AuxDef::Lookup(l) => obj(vec![
                        ("name", text(&a.name)),
                        (
                            "lookup",
                            obj(vec![
                                ("input", text(&l.input)),
                                ("points", list(&l.points, |&(x, y)| nums(&[x, y]))),
                            ]),
                        ),
                    ]),
                }),
            ));
            fields.push((
                "exogenous",
                list(&m.exogenous, |t| match &t.source {
                    ExoSource::Constant(v) => {
                        obj(vec![("name", text(&t.name)), ("constant", num(*v))])
                    }
                    ExoSource::Series(v) => obj(vec![("name", text(&t.name)), ("series", nums(v))]),
                }),
            ));
            fields.push(("dt", num(m.dt)));
            fields.push(("horizon", num(m.horizon as f64)));
        }
        Body::HfnmcfSpec(s) => {
            fields.push(("system", obj(system_fields(&s.system))));
            fields.push(("horizon", num(s.horizon as f64)));
            fields.push(("dt", num(s.dt)));
            if let Some(p) = &s.place_names {
                fields.push(("place_names", texts(p)));
            }
            if !s.objective.quadratic.is_empty() || !s.objective.linear.is_empty() {
                fields.push((
                    "objective",
                    obj(vec![
                        ("quadratic", nums(&s.objective.quadratic)),
                        ("linear", nums(&s.objective.linear)),
                    ]),
                ));
            }
            if !s.exogenous.is_empty() {
                fields.push((
                    "exogenous",
                    node(Value::Object(
                        s.exogenous
                            .iter()
                            .map(|(k, v)| (k.clone(), nums(v)))
                            .collect(),
                    )),
                ));
            }
            fields.push((
                "boundary",
                list(&s.boundary, |b| {
                    obj(vec![
                        ("capability", text(&b.capability)),
                        ("side", side(b.side)),
                        ("value", pin_value(&b.value)),
                    ])
                }),
            ));
            if !s.operand_nets.is_empty() {
                fields.push((
                    "operand_nets",
                    list(&s.operand_nets, |n| {
                        obj(vec![
                            ("operand", text(&n.operand)),
                            ("places", texts(&n.places)),
                            ("transitions", texts(&n.transitions)),
                            ("m_plus", list(&n.m_plus, |r| nums(r))),
                            ("m_minus", list(&n.m_minus, |r| nums(r))),
                            ("durations", list(&n.durations, |&d| num(d as f64))),
                            ("initial", nums(&n.initial)),
                        ])
                    }),
                ));
                fields.push((
                    "sync",
                    list(&s.sync, |l| {
                        obj(vec![
                            ("operand_transition", text(&l.operand_transition)),
                            ("capability", text(&l.capability)),
                        ])
                    }),
                ));
                fields.push((
                    "operand_boundary",
                    list(&s.operand_boundary, |b| {
                        obj(vec![
                            ("transition", text(&b.transition)),
                            ("side", side(b.side)),
                            ("value", pin_value(&b.value)),
                        ])
                    }),
                ));
            }
            fields.push(("initial", conditions(&s.initial)));
            if let Some(f) = &s.final_conditions {
                fields.push(("final", conditions(f)));
            }
            fields.push((
                "bounds",
                list(&s.bounds, |b| {
                    obj(vec![
                        ("variable", text(&b.variable)),
                        ("lower", bound(b.lower)),
                        ("upper", bound(b.upper)),
                    ])
                }),
            ));
            fields.push((
                "device_models",
                obj(vec![
                    ("set", text(&s.devices.set)),
                    (
                        "params",
                        node(Value::Object(
                            s.devices
                                .params
                                .iter()
                                .map(|(k, v)| (k.clone(), num(*v)))
                                .collect(),
                        )),
                    ),
                ]),
            ));
        }
        Body::MarkovSpec(m) => {
            fields.push((
                "tracks",
                list(&m.tracks, |t| {
                    obj(vec![
                        ("name", text(&t.name)),
                        ("states", nums(&t.states)),
                        ("transition", list(&t.transition, |r| nums(r))),
                        ("initial", num(t.initial as f64)),
                    ])
                }),
            ));
        }
    }
    obj(fields)
}

/// Canonical text of a document: sorted keys, fixed number format.
/// Fails on NaN or infinite parameters (infinite bounds become `null`).
pub fn serialize(doc: &ModelDocument) -> Result<String, SerializeError> {
    json::to_canonical(&to_tree(doc).value).map_err(|_| SerializeError("non-finite number".into()))
}

/// The Mono Lake problem as an `hfnmcf-spec` document (no inline series).
pub fn monolake_document(p: &crate::monolake::MonoParams, horizon: usize) -> ModelDocument {
    let exo = crate::monolake::ExogenousSeries::constant(horizon + 1, 0.0, 0.0, 0.0);
    let spec = crate::monolake::hfnmcf_spec(p, &exo, horizon).expect("valid parameters");
    let system = crate::monolake::system_model().expect("static model");
    ModelDocument::new(Body::HfnmcfSpec(Box::new(SpecDoc {
        system: SystemDoc::from_model(&system),
        horizon,
        dt: spec.dt,
        place_names: spec.place_names,
        objective: Objective::default(),
        exogenous: vec![],
        boundary: spec.boundary,
        operand_nets: vec![],
        sync: vec![],
        operand_boundary: vec![],
        initial: spec.initial,
        final_conditions: None,
        bounds: vec![],
        devices: DeviceRef {
            set: "monolake".into(),
            params: p.to_map(),
        },
    })))
}
