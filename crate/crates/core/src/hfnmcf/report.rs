//! Structural report: which constraint blocks are active, collapsed,
//! relaxed or absent in an assembled problem.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintBlock {
    PlaceContinuity,
    TransitionContinuity,
    Duration,
    OperandPlaceContinuity,
    OperandTransitionContinuity,
    OperandDuration,
    SyncPlus,
    SyncMinus,
    Boundary,
    OperandBoundary,
    InitialCondition,
    FinalCondition,
    CapacityBounds,
    DeviceEquality,
    DeviceAuxiliary,
}

impl ConstraintBlock {
    pub const ALL: [ConstraintBlock; 15] = [
        ConstraintBlock::PlaceContinuity,
        ConstraintBlock::TransitionContinuity,
        ConstraintBlock::Duration,
        ConstraintBlock::OperandPlaceContinuity,
        ConstraintBlock::OperandTransitionContinuity,
        ConstraintBlock::OperandDuration,
        ConstraintBlock::SyncPlus,
        ConstraintBlock::SyncMinus,
        ConstraintBlock::Boundary,
        ConstraintBlock::OperandBoundary,
        ConstraintBlock::InitialCondition,
        ConstraintBlock::FinalCondition,
        ConstraintBlock::CapacityBounds,
        ConstraintBlock::DeviceEquality,
        ConstraintBlock::DeviceAuxiliary,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConstraintBlock::PlaceContinuity => "place-continuity",
            ConstraintBlock::TransitionContinuity => "transition-continuity",
            ConstraintBlock::Duration => "duration",
            ConstraintBlock::OperandPlaceContinuity => "operand-place-continuity",
            ConstraintBlock::OperandTransitionContinuity => "operand-transition-continuity",
            ConstraintBlock::OperandDuration => "operand-duration",
            ConstraintBlock::SyncPlus => "sync-plus",
            ConstraintBlock::SyncMinus => "sync-minus",
            ConstraintBlock::Boundary => "boundary",
            ConstraintBlock::OperandBoundary => "operand-boundary",
            ConstraintBlock::InitialCondition => "initial-condition",
            ConstraintBlock::FinalCondition => "final-condition",
            ConstraintBlock::CapacityBounds => "capacity-bounds",
            ConstraintBlock::DeviceEquality => "device-equality",
            ConstraintBlock::DeviceAuxiliary => "device-auxiliary",
        }
    }
}

impl fmt::Display for ConstraintBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Active,
    /// Trivially satisfied or eliminated by substitution; contributes no rows.
    Collapsed,
    /// Bounds sent to ±∞.
    Relaxed,
    /// Not specified for this problem.
    Absent,
}

impl fmt::Display for BlockStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockStatus::Active => "active",
            BlockStatus::Collapsed => "collapsed",
            BlockStatus::Relaxed => "relaxed",
            BlockStatus::Absent => "absent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEntry {
    pub block: ConstraintBlock,
    pub status: BlockStatus,
    pub reason: String,
    /// Constraint rows contributed over the whole horizon.
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `Z = 0`: a pure feasibility problem.
    Feasibility,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub objective: ObjectiveKind,
    pub entries: Vec<BlockEntry>,
}

impl CollapseReport {
    pub fn entry(&self, block: ConstraintBlock) -> &BlockEntry {
        self.entries
            .iter()
            .find(|e| e.block == block)
            .expect("report lists every block")
    }

    pub fn status(&self, block: ConstraintBlock) -> BlockStatus {
        self.entry(block).status
    }

    pub fn with_status(&self, status: BlockStatus) -> Vec<ConstraintBlock> {
        self.entries
            .iter()
            .filter(|e| e.status == status)
            .map(|e| e.block)
            .collect()
    }
}

impl fmt::Display for CollapseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let objective = match self.objective {
            ObjectiveKind::Feasibility => "feasibility problem (Z = 0)",
            ObjectiveKind::Linear => "linear",
            ObjectiveKind::Quadratic => "quadratic",
        };
        writeln!(f, "objective: {objective}")?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<30} {:<10} rows={:<6} {}",
                e.block.label(),
                e.status.to_string(),
                e.rows,
                e.reason
            )?;
        }
        Ok(())
    }
}
