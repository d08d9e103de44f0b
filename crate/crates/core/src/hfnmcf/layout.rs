//! Column layout of the stacked decision vector.
//!
//! Each step block is `x[k] = [Q_B; Q_E; Q_SL; Q_EL; U⁻; U⁺; U⁻_L; U⁺_L]`
//! for `k = 0..=K`. When every transition of a net has zero duration, the
//! net's input and output firings are consolidated: `U⁺` aliases the `U⁻`
//! columns and the in-flight marking block disappears.

/// One per-step primary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Place(usize),
    InFlight(usize),
    OperandPlace(usize),
    OperandInFlight(usize),
    Input(usize),
    Output(usize),
    OperandInput(usize),
    OperandOutput(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub horizon: usize,
    pub places: usize,
    pub capabilities: usize,
    pub operand_places: usize,
    pub operand_transitions: usize,
    pub aux: usize,
    /// Engineering-system firings consolidated (all durations zero).
    pub esn_consolidated: bool,
    /// Operand-net firings consolidated (all operand durations zero).
    pub operand_consolidated: bool,
}

impl Layout {
    fn widths(&self) -> [usize; 8] {
        let qe = if self.esn_consolidated {
            0
        } else {
            self.capabilities
        };
        let up = qe;
        let qel = if self.operand_consolidated {
            0
        } else {
            self.operand_transitions
        };
        let upl = qel;
        [
            self.places,
            qe,
            self.operand_places,
            qel,
            self.capabilities,
            up,
            self.operand_transitions,
            upl,
        ]
    }

    /// Width of one step block `x[k]`.
    pub fn width(&self) -> usize {
        self.widths().iter().sum()
    }

    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    /// Length of the stacked primary vector X.
    pub fn num_primary(&self) -> usize {
        self.width() * self.steps()
    }

    pub fn num_auxiliary(&self) -> usize {
        self.aux * self.steps()
    }

    /// Offset of a variable inside a step block, resolving aliases.
    /// `None` for variables eliminated by consolidation.
    pub fn offset(&self, var: Var) -> Option<usize> {
        let w = self.widths();
        let start = |b: usize| w[..b].iter().sum::<usize>();
        let (block, idx) = match var {
            Var::Place(i) => (0, i),
            Var::InFlight(i) => (1, i),
            Var::OperandPlace(i) => (2, i),
            Var::OperandInFlight(i) => (3, i),
            Var::Input(i) => (4, i),
            Var::Output(i) if self.esn_consolidated => (4, i),
            Var::Output(i) => (5, i),
            Var::OperandInput(i) => (6, i),
            Var::OperandOutput(i) if self.operand_consolidated => (6, i),
            Var::OperandOutput(i) => (7, i),
        };
        (idx < w[block]).then(|| start(block) + idx)
    }

    /// Column of `var` at step `k` in X.
    pub fn col(&self, k: usize, var: Var) -> Option<usize> {
        debug_assert!(k <= self.horizon);
        self.offset(var).map(|o| k * self.width() + o)
    }

    /// Column of auxiliary `j` at step `k` in the joint vector `[X; Y]`.
    pub fn aux_col(&self, k: usize, j: usize) -> usize {
        self.num_primary() + k * self.aux + j
    }

    /// Variables of one step block, in layout order (aliases skipped).
    pub fn block_vars(&self) -> Vec<Var> {
        let mut v = Vec::with_capacity(self.width());
        v.extend((0..self.places).map(Var::Place));
        if !self.esn_consolidated {
            v.extend((0..self.capabilities).map(Var::InFlight));
        }
        v.extend((0..self.operand_places).map(Var::OperandPlace));
        if !self.operand_consolidated {
            v.extend((0..self.operand_transitions).map(Var::OperandInFlight));
        }
        v.extend((0..self.capabilities).map(Var::Input));
        if !self.esn_consolidated {
            v.extend((0..self.capabilities).map(Var::Output));
        }
        v.extend((0..self.operand_transitions).map(Var::OperandInput));
        if !self.operand_consolidated {
            v.extend((0..self.operand_transitions).map(Var::OperandOutput));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(consolidated: bool) -> Layout {
        Layout {
            horizon: 3,
            places: 2,
            capabilities: 6,
            operand_places: 0,
            operand_transitions: 0,
            aux: 10,
            esn_consolidated: consolidated,
            operand_consolidated: true,
        }
    }

    #[test]
    fn consolidated_block_is_places_then_firings() {
        let l = layout(true);
        assert_eq!(l.width(), 8);
        assert_eq!(l.offset(Var::Input(0)), Some(2));
        assert_eq!(l.offset(Var::Output(5)), Some(7));
        assert_eq!(l.offset(Var::InFlight(0)), None);
        assert_eq!(l.col(2, Var::Place(1)), Some(17));
        assert_eq!(l.aux_col(1, 3), 32 + 10 + 3);
        assert_eq!(l.block_vars().len(), l.width());
    }

    #[test]
    fn full_block_order() {
        let l = layout(false);
        assert_eq!(l.width(), 2 + 6 + 6 + 6);
        assert_eq!(l.offset(Var::InFlight(0)), Some(2));
        assert_eq!(l.offset(Var::Input(0)), Some(8));
        assert_eq!(l.offset(Var::Output(0)), Some(14));
        let vars = l.block_vars();
        for (i, v) in vars.iter().enumerate() {
            assert_eq!(l.offset(*v), Some(i));
        }
    }
}
