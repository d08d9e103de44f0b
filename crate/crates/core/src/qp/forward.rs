//! Initial-value solve of an assembled problem.
//!
//! Step by step, pins, synchronization rows, durations and explicit device
//! models are propagated until every firing and auxiliary at step `k` is
//! known; the net state transition functions then give the markings at
//! `k + 1`.

use crate::hfnmcf::{ConstraintBlock, DeviceKind, HfnmcfProblem, Source, Var};
use crate::nets::{esn_step, operand_net_step};

use super::SolveError;

/// Step of a joint column.
fn step_of(problem: &HfnmcfProblem, col: usize) -> usize {
    let np = problem.layout.num_primary();
    if col < np {
        col / problem.layout.width()
    } else {
        (col - np) / problem.layout.aux.max(1)
    }
}

fn is_continuity(b: ConstraintBlock) -> bool {
    matches!(
        b,
        ConstraintBlock::PlaceContinuity
            | ConstraintBlock::TransitionContinuity
            | ConstraintBlock::OperandPlaceContinuity
            | ConstraintBlock::OperandTransitionContinuity
    )
}

struct State<'a> {
    p: &'a HfnmcfProblem,
    z: Vec<Option<f64>>,
}

impl State<'_> {
    fn source_col(&self, k: usize, s: Source) -> Option<usize> {
        match s {
            Source::Primary(v) => self.p.layout.col(k, v),
            Source::Aux(j) => Some(self.p.layout.aux_col(k, j)),
            Source::Exogenous(_) => None,
        }
    }

    fn value(&self, k: usize, s: Source) -> Option<f64> {
        match s {
            Source::Exogenous(j) => {
                let name = &self.p.exogenous.names()[j];
                Some(self.p.exogenous.column(name).expect("resolved track")[k])
            }
            _ => self.z[self.source_col(k, s).expect("non-exogenous")],
        }
    }

    fn set(&mut self, col: usize, v: f64) -> Result<(), SolveError> {
        if !v.is_finite() {
            return Err(SolveError::NonfiniteState {
                step: step_of(self.p, col),
                variable: self.name(col),
            });
        }
        self.z[col] = Some(v);
        Ok(())
    }

    fn name(&self, col: usize) -> String {
        let np = self.p.layout.num_primary();
        if col < np {
            self.p.var_names[col % self.p.layout.width()].clone()
        } else {
            self.p.aux_names[(col - np) % self.p.layout.aux].clone()
        }
    }
}

/// Runs the initial-value recursion. Fails when a firing or auxiliary has
/// no determining pin or model, or when a value leaves the reals.
pub fn forward_propagate(problem: &HfnmcfProblem) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    if problem.has_final_conditions {
        return Err(SolveError::NotInitialValue(
            "final conditions make the problem a boundary-value problem".into(),
        ));
    }
    let l = &problem.layout;
    let np = l.num_primary();
    let mut st = State {
        p: problem,
        z: vec![None; np + l.num_auxiliary()],
    };

    // rows bucketed by the latest step they touch
    let mut rows_at: Vec<Vec<usize>> = vec![Vec::new(); l.steps()];
    for (i, r) in problem.rows.iter().enumerate() {
        if is_continuity(r.block) || r.terms.is_empty() {
            continue;
        }
        let k = r
            .terms
            .iter()
            .map(|&(c, _)| step_of(problem, c))
            .max()
            .unwrap_or(0);
        rows_at[k].push(i);
    }

    // initial markings
    for &i in &rows_at[0] {
        let r = &problem.rows[i];
        if r.block == ConstraintBlock::InitialCondition {
            let (c, a) = r.terms[0];
            st.set(c, r.rhs / a)?;
        }
    }
    let mut op_place_off = 0;
    for net in &problem.operand_nets {
        for (p, &v) in net.initial.iter().enumerate() {
            let c = l
                .col(0, Var::OperandPlace(op_place_off + p))
                .expect("operand place");
            if st.z[c].is_none() {
                st.set(c, v)?;
            }
        }
        op_place_off += net.num_places();
    }
    for v in l.block_vars() {
        if matches!(v, Var::InFlight(_) | Var::OperandInFlight(_)) {
            let c = l.col(0, v).expect("block var");
            if st.z[c].is_none() {
                st.z[c] = Some(0.0);
            }
        }
    }
    for v in l.block_vars() {
        if matches!(v, Var::Place(_) | Var::OperandPlace(_)) {
            let c = l.col(0, v).expect("block var");
            if st.z[c].is_none() {
                return Err(SolveError::UnderdeterminedStep {
                    step: 0,
                    variable: st.name(c),
                });
            }
        }
    }

    let firing_vars: Vec<Var> = l
        .block_vars()
        .into_iter()
        .filter(|v| {
            matches!(
                v,
                Var::Input(_) | Var::Output(_) | Var::OperandInput(_) | Var::OperandOutput(_)
            )
        })
        .collect();
    let op_durations: Vec<usize> = problem
        .operand_nets
        .iter()
        .flat_map(|n| n.durations.iter().copied())
        .collect();

    for k in 0..l.steps() {
        let mut defaults_applied = false;
        loop {
            let mut progress = true;
            while progress {
                progress = false;
                for &i in &rows_at[k] {
                    let r = &problem.rows[i];
                    let mut unknown = None;
                    let mut count = 0;
                    let mut acc = 0.0;
                    for &(c, a) in &r.terms {
                        match st.z[c] {
                            Some(v) => acc += a * v,
                            None => {
                                count += 1;
                                unknown = Some((c, a));
                            }
                        }
                    }
                    if count == 1 {
                        let (c, a) = unknown.expect("one unknown");
                        st.set(c, (r.rhs - acc) / a)?;
                        progress = true;
                    }
                }
                for d in &problem.devices {
                    if d.model.kind != DeviceKind::Equality {
                        continue;
                    }
                    let Some(t) = d.target else { continue };
                    let tc = st.source_col(k, t).expect("targets are variables");
                    if st.z[tc].is_some() {
                        continue;
                    }
                    let args: Option<Vec<f64>> = d.reads.iter().map(|&s| st.value(k, s)).collect();
                    if let Some(args) = args {
                        st.set(tc, (d.model.eval)(&args))?;
                        progress = true;
                    }
                }
            }
            if defaults_applied {
                break;
            }
            // outputs of transitions that started before the horizon
            defaults_applied = true;
            for v in &firing_vars {
                let kd = match *v {
                    Var::Output(i) if !l.esn_consolidated => problem.durations[i],
                    Var::OperandOutput(i) if !l.operand_consolidated => op_durations[i],
                    _ => continue,
                };
                let c = l.col(k, *v).expect("block var");
                if k < kd && st.z[c].is_none() {
                    st.z[c] = Some(0.0);
                }
            }
        }

        for v in &firing_vars {
            let c = l.col(k, *v).expect("block var");
            if st.z[c].is_none() {
                return Err(SolveError::UnderdeterminedStep {
                    step: k,
                    variable: st.name(c),
                });
            }
        }
        for j in 0..l.aux {
            let c = l.aux_col(k, j);
            if st.z[c].is_none() {
                return Err(SolveError::UnderdeterminedStep {
                    step: k,
                    variable: st.name(c),
                });
            }
        }

        if k == l.horizon {
            break;
        }
        let get = |st: &State, vars: &mut dyn Iterator<Item = Var>| -> Vec<f64> {
            vars.map(|v| st.z[l.col(k, v).expect("block var")].expect("assigned"))
                .collect()
        };
        let q_b = get(&st, &mut (0..l.places).map(Var::Place));
        let u_minus = get(&st, &mut (0..l.capabilities).map(Var::Input));
        let u_plus = get(&st, &mut (0..l.capabilities).map(Var::Output));
        let q_e = if l.esn_consolidated {
            vec![0.0; l.capabilities]
        } else {
            get(&st, &mut (0..l.capabilities).map(Var::InFlight))
        };
        let (q_b_next, q_e_next) = esn_step(
            &q_b,
            &q_e,
            &u_minus,
            &u_plus,
            &problem.incidence,
            problem.dt,
        )
        .map_err(SolveError::Net)?;
        for (p, v) in q_b_next.into_iter().enumerate() {
            st.set(l.col(k + 1, Var::Place(p)).expect("place"), v)?;
        }
        if !l.esn_consolidated {
            for (i, v) in q_e_next.into_iter().enumerate() {
                st.set(l.col(k + 1, Var::InFlight(i)).expect("in-flight"), v)?;
            }
        }

        let (mut po, mut to) = (0, 0);
        for net in &problem.operand_nets {
            let (npl, ntr) = (net.num_places(), net.num_transitions());
            let q_s = get(&st, &mut (po..po + npl).map(Var::OperandPlace));
            let um = get(&st, &mut (to..to + ntr).map(Var::OperandInput));
            let up = get(&st, &mut (to..to + ntr).map(Var::OperandOutput));
            let qe = if l.operand_consolidated {
                vec![0.0; ntr]
            } else {
                get(&st, &mut (to..to + ntr).map(Var::OperandInFlight))
            };
            let (qs_next, qe_next) =
                operand_net_step(&q_s, &qe, &um, &up, &net.incidence, problem.dt)
                    .map_err(SolveError::Net)?;
            for (p, v) in qs_next.into_iter().enumerate() {
                st.set(
                    l.col(k + 1, Var::OperandPlace(po + p))
                        .expect("operand place"),
                    v,
                )?;
            }
            if !l.operand_consolidated {
                for (x, v) in qe_next.into_iter().enumerate() {
                    st.set(
                        l.col(k + 1, Var::OperandInFlight(to + x))
                            .expect("operand in-flight"),
                        v,
                    )?;
                }
            }
            po += npl;
            to += ntr;
        }
    }

    let z: Vec<f64> = st.z.iter().map(|v| v.unwrap_or(0.0)).collect();
    let (x, y) = z.split_at(np);
    Ok((x.to_vec(), y.to_vec()))
}
