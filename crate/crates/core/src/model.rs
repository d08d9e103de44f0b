//! The hetero-functional meta-architecture instance: operands, resources,
//! processes and the capabilities that allocate processes to resources.
//!
//! A [`SystemModel`] is immutable once built. Declaration order is the
//! canonical order and fixes every downstream indexing (incidence rows and
//! columns, firing vectors, trajectory columns).

use std::collections::HashMap;

use thiserror::Error;

/// Reserved buffer id for the region outside the system boundary.
///
/// Capabilities may name it as origin or destination; it never appears in
/// the buffer list and produces no incidence entries.
pub const ENVIRONMENT: &str = "environment";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("dangling reference: {what} `{id}` does not resolve")]
    DanglingReference { what: &'static str, id: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("kind violation: {0}")]
    KindViolation(String),
    #[error("empty model: {0}")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operand {
    pub id: String,
    pub name: String,
    pub has_state_net: bool,
}

impl Operand {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            has_state_net: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Transformation,
    IndependentBuffer,
    Transportation,
}

impl ResourceKind {
    pub fn is_buffer(self) -> bool {
        matches!(
            self,
            ResourceKind::Transformation | ResourceKind::IndependentBuffer
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    pub id: String,
    pub name: String,
    pub kind: ResourceKind,
}

impl Resource {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kind: ResourceKind) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    Transformation,
    RefinedTransportation,
}

/// One operand consumed or produced per unit firing.
#[derive(Debug, Clone, PartialEq)]
pub struct OperandFlow {
    pub operand: String,
    pub quantity: f64,
}

impl OperandFlow {
    /// Unit-weight flow.
    pub fn unit(operand: impl Into<String>) -> Self {
        Self {
            operand: operand.into(),
            quantity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub id: String,
    pub name: String,
    pub kind: ProcessKind,
    pub inputs: Vec<OperandFlow>,
    pub outputs: Vec<OperandFlow>,
}

/// "Resource r does process p", moving operand from `origin` to `destination`.
#[derive(Debug, Clone, PartialEq)]
pub struct Capability {
    pub id: String,
    pub resource: String,
    pub process: String,
    pub origin: String,
    pub destination: String,
    /// Transition duration in time steps.
    pub duration: usize,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    operands: Vec<Operand>,
    resources: Vec<Resource>,
    processes: Vec<Process>,
    capabilities: Vec<Capability>,
    buffers: Vec<usize>,
    operand_index: HashMap<String, usize>,
    resource_index: HashMap<String, usize>,
    process_index: HashMap<String, usize>,
    buffer_index: HashMap<String, usize>,
    capability_index: HashMap<String, usize>,
}

fn index_ids<'a>(
    ids: impl Iterator<Item = &'a str>,
    taken: &mut HashMap<String, ()>,
) -> Result<HashMap<String, usize>, ModelError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if id == ENVIRONMENT || taken.insert(id.to_string(), ()).is_some() {
            return Err(ModelError::DuplicateId(id.to_string()));
        }
        map.insert(id.to_string(), i);
    }
    Ok(map)
}

/// Validates referential integrity and fixes the canonical index maps.
pub fn build_system(
    operands: Vec<Operand>,
    resources: Vec<Resource>,
    processes: Vec<Process>,
    capabilities: Vec<Capability>,
) -> Result<SystemModel, ModelError> {
    if operands.is_empty() {
        return Err(ModelError::Empty("no operands"));
    }
    if resources.is_empty() {
        return Err(ModelError::Empty("no resources"));
    }
    if processes.is_empty() {
        return Err(ModelError::Empty("no processes"));
    }

    // ids share one namespace so that diagnostics stay unambiguous
    let mut taken = HashMap::new();
    let operand_index = index_ids(operands.iter().map(|o| o.id.as_str()), &mut taken)?;
    let resource_index = index_ids(resources.iter().map(|r| r.id.as_str()), &mut taken)?;
    let process_index = index_ids(processes.iter().map(|p| p.id.as_str()), &mut taken)?;
    let capability_index = index_ids(capabilities.iter().map(|c| c.id.as_str()), &mut taken)?;

    for p in &processes {
        if p.inputs.is_empty() && p.outputs.is_empty() {
            return Err(ModelError::KindViolation(format!(
                "process `{}` has neither inputs nor outputs",
                p.id
            )));
        }
        for f in p.inputs.iter().chain(&p.outputs) {
            if !operand_index.contains_key(&f.operand) {
                return Err(ModelError::DanglingReference {
                    what: "operand",
                    id: f.operand.clone(),
                });
            }
            if !(f.quantity >= 0.0 && f.quantity.is_finite()) {
                return Err(ModelError::KindViolation(format!(
                    "process `{}` has invalid quantity {} for `{}`",
                    p.id, f.quantity, f.operand
                )));
            }
        }
    }

    let buffers: Vec<usize> = resources
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind.is_buffer())
        .map(|(i, _)| i)
        .collect();
    let buffer_index: HashMap<String, usize> = buffers
        .iter()
        .enumerate()
        .map(|(y, &r)| (resources[r].id.clone(), y))
        .collect();

    for c in &capabilities {
        let r = *resource_index
            .get(&c.resource)
            .ok_or_else(|| ModelError::DanglingReference {
                what: "resource",
                id: c.resource.clone(),
            })?;
        let p = *process_index
            .get(&c.process)
            .ok_or_else(|| ModelError::DanglingReference {
                what: "process",
                id: c.process.clone(),
            })?;
        for end in [&c.origin, &c.destination] {
            if end == ENVIRONMENT || buffer_index.contains_key(end) {
                continue;
            }
            if resource_index.contains_key(end) {
                return Err(ModelError::KindViolation(format!(
                    "capability `{}` uses non-buffer resource `{}` as an endpoint",
                    c.id, end
                )));
            }
            return Err(ModelError::DanglingReference {
                what: "buffer",
                id: end.clone(),
            });
        }
        let resource = &resources[r];
        match resource.kind {
            ResourceKind::Transformation | ResourceKind::IndependentBuffer => {
                if c.origin != resource.id || c.destination != resource.id {
                    return Err(ModelError::KindViolation(format!(
                        "capability `{}` on buffer `{}` must have origin = destination = `{}`",
                        c.id, resource.id, resource.id
                    )));
                }
            }
            ResourceKind::Transportation => {
                if processes[p].kind != ProcessKind::RefinedTransportation {
                    return Err(ModelError::KindViolation(format!(
                        "transportation resource `{}` cannot perform transformation process `{}`",
                        resource.id, processes[p].id
                    )));
                }
            }
        }
    }

    Ok(SystemModel {
        operands,
        resources,
        processes,
        capabilities,
        buffers,
        operand_index,
        resource_index,
        process_index,
        buffer_index,
        capability_index,
    })
}

impl SystemModel {
    pub fn operands(&self) -> &[Operand] {
        &self.operands
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    /// Transformation resources and independent buffers, in declaration order.
    pub fn buffers(&self) -> Vec<&Resource> {
        self.buffers.iter().map(|&r| &self.resources[r]).collect()
    }

    pub fn num_operands(&self) -> usize {
        self.operands.len()
    }

    pub fn num_buffers(&self) -> usize {
        self.buffers.len()
    }

    pub fn num_capabilities(&self) -> usize {
        self.capabilities.len()
    }

    /// Number of engineering-system-net places, |L|·|B_S|.
    pub fn num_places(&self) -> usize {
        self.operands.len() * self.buffers.len()
    }

    pub fn operand_index(&self, id: &str) -> Option<usize> {
        self.operand_index.get(id).copied()
    }

    pub fn buffer_index(&self, id: &str) -> Option<usize> {
        self.buffer_index.get(id).copied()
    }

    pub fn capability_index(&self, id: &str) -> Option<usize> {
        self.capability_index.get(id).copied()
    }

    pub fn resource(&self, id: &str) -> Option<&Resource> {
        self.resource_index.get(id).map(|&i| &self.resources[i])
    }

    pub fn process(&self, id: &str) -> Option<&Process> {
        self.process_index.get(id).map(|&i| &self.processes[i])
    }

    /// Buffer-major place index: `y·|L| + i`.
    pub fn place_index(&self, operand: usize, buffer: usize) -> usize {
        buffer * self.operands.len() + operand
    }

    /// Default place label `operand@buffer`.
    pub fn place_label(&self, place: usize) -> String {
        let nl = self.operands.len();
        let (y, i) = (place / nl, place % nl);
        format!(
            "{}@{}",
            self.operands[i].id, self.resources[self.buffers[y]].id
        )
    }

    pub fn durations(&self) -> Vec<usize> {
        self.capabilities.iter().map(|c| c.duration).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transport(id: &str) -> Process {
        Process {
            id: id.into(),
            name: id.into(),
            kind: ProcessKind::RefinedTransportation,
            inputs: vec![OperandFlow::unit("water")],
            outputs: vec![OperandFlow::unit("water")],
        }
    }

    fn cap(id: &str, r: &str, p: &str, o: &str, d: &str) -> Capability {
        Capability {
            id: id.into(),
            resource: r.into(),
            process: p.into(),
            origin: o.into(),
            destination: d.into(),
            duration: 0,
        }
    }

    #[test]
    fn empty_capabilities_is_valid() {
        let m = build_system(
            vec![Operand::new("water", "Water")],
            vec![Resource::new("lake", "Lake", ResourceKind::Transformation)],
            vec![transport("move")],
            vec![],
        )
        .unwrap();
        assert_eq!(m.num_capabilities(), 0);
        assert_eq!(m.num_buffers(), 1);
    }

    #[test]
    fn unknown_resource_is_dangling() {
        let err = build_system(
            vec![Operand::new("water", "Water")],
            vec![Resource::new("lake", "Lake", ResourceKind::Transformation)],
            vec![transport("move")],
            vec![cap("c", "X", "move", "lake", "lake")],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::DanglingReference {
                what: "resource",
                id: "X".into()
            }
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = build_system(
            vec![
                Operand::new("water", "Water"),
                Operand::new("water", "Again"),
            ],
            vec![Resource::new("lake", "Lake", ResourceKind::Transformation)],
            vec![transport("move")],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::DuplicateId("water".into()));
    }

    #[test]
    fn transporter_as_endpoint_is_kind_violation() {
        let err = build_system(
            vec![Operand::new("water", "Water")],
            vec![
                Resource::new("lake", "Lake", ResourceKind::Transformation),
                Resource::new("pipe", "Pipe", ResourceKind::Transportation),
            ],
            vec![transport("move")],
            vec![cap("c", "pipe", "move", "pipe", "lake")],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::KindViolation(_)));
    }

    #[test]
    fn transformation_capability_must_self_loop() {
        let err = build_system(
            vec![Operand::new("water", "Water")],
            vec![
                Resource::new("a", "A", ResourceKind::Transformation),
                Resource::new("b", "B", ResourceKind::Transformation),
            ],
            vec![transport("move")],
            vec![cap("c", "a", "move", "a", "b")],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::KindViolation(_)));
    }

    #[test]
    fn buffers_only_transporters_is_empty() {
        let m = build_system(
            vec![Operand::new("water", "Water")],
            vec![Resource::new("pipe", "Pipe", ResourceKind::Transportation)],
            vec![transport("move")],
            vec![cap("c", "pipe", "move", ENVIRONMENT, ENVIRONMENT)],
        )
        .unwrap();
        assert!(m.buffers().is_empty());
    }

    #[test]
    fn buffers_interleaved_keep_declaration_order() {
        let m = build_system(
            vec![Operand::new("water", "Water")],
            vec![
                Resource::new("b1", "B1", ResourceKind::Transformation),
                Resource::new("h1", "H1", ResourceKind::Transportation),
                Resource::new("b2", "B2", ResourceKind::IndependentBuffer),
                Resource::new("h2", "H2", ResourceKind::Transportation),
                Resource::new("b3", "B3", ResourceKind::Transformation),
            ],
            vec![transport("move")],
            vec![],
        )
        .unwrap();
        let ids: Vec<_> = m.buffers().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["b1", "b2", "b3"]);
        assert_eq!(m.buffer_index("b3"), Some(2));
        assert_eq!(m.buffer_index("h1"), None);
    }
}
