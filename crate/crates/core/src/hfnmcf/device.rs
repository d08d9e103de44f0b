//! Application-specific device models `g(X, Y) = 0` and `h(Y) ≤ 0`.
//!
//! A device model is a callback over a declared list of per-step inputs.
//! Explicit models also name a target: the residual is
//! `target − f(inputs)` and forward propagation can assign the target
//! directly. Models are referenced from problem files by registered set
//! name; see [`device_set`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Callback receiving the values of `reads`, in declaration order.
pub type DeviceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    /// `target − f = 0`, or `f = 0` without a target.
    Equality,
    /// `f ≤ 0`.
    Inequality,
}

/// Which device-model block a constraint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceBlock {
    /// Couples primary and auxiliary variables, `g(X, Y)`.
    Primary,
    /// Relations among auxiliaries only, `h(Y)`.
    Auxiliary,
}

#[derive(Clone)]
pub struct DeviceModel {
    pub name: String,
    pub kind: DeviceKind,
    pub block: DeviceBlock,
    /// Per-step variable or auxiliary assigned by this model.
    pub target: Option<String>,
    /// Per-step variable names, auxiliary names or exogenous track names.
    pub reads: Vec<String>,
    /// Declared affine in `reads`; only such models reach the QP path.
    pub linear: bool,
    pub eval: DeviceFn,
}

impl fmt::Debug for DeviceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceModel")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("block", &self.block)
            .field("target", &self.target)
            .field("reads", &self.reads)
            .field("linear", &self.linear)
            .finish_non_exhaustive()
    }
}

impl DeviceModel {
    /// Explicit equality `target = f(reads)`.
    pub fn assign(
        name: impl Into<String>,
        block: DeviceBlock,
        target: impl Into<String>,
        reads: &[&str],
        linear: bool,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: DeviceKind::Equality,
            block,
            target: Some(target.into()),
            reads: reads.iter().map(|s| s.to_string()).collect(),
            linear,
            eval: Arc::new(f),
        }
    }

    /// Inequality `f(reads) ≤ 0`.
    pub fn inequality(
        name: impl Into<String>,
        block: DeviceBlock,
        reads: &[&str],
        linear: bool,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: DeviceKind::Inequality,
            block,
            target: None,
            reads: reads.iter().map(|s| s.to_string()).collect(),
            linear,
            eval: Arc::new(f),
        }
    }
}

/// Auxiliary variable declarations plus the models that relate them.
#[derive(Debug, Clone, Default)]
pub struct DeviceSet {
    pub aux_names: Vec<String>,
    pub models: Vec<DeviceModel>,
}

pub type DeviceParams = BTreeMap<String, f64>;

/// Resolves a registered device-model set by name.
pub fn device_set(name: &str, params: &DeviceParams) -> Result<DeviceSet, String> {
    match name {
        "none" => Ok(DeviceSet::default()),
        "monolake" => crate::monolake::device_set_from_params(params),
        other => Err(format!(
            "unknown device-model set `{other}` (registered: none, monolake)"
        )),
    }
}
