//! Engineering system net and operand net state machines.
//!
//! Both nets share the elementary Petri-net state transition
//!
//! ```text
//! Q_S[k+1] = Q_S[k] + M⁺ U⁺[k] Δt − M⁻ U⁻[k] Δt
//! Q_E[k+1] = Q_E[k] − U⁺[k] Δt + U⁻[k] Δt
//! ```
//!
//! Firing vectors are real-valued and sign-agnostic here; nonnegativity is
//! a matter for capacity bounds in the HFNMCF program.

use thiserror::Error;

use crate::incidence::IncidenceMatrices;
use crate::sparse::CooMatrix;
use crate::trajectory::Trajectory;

/// Absolute tolerance for duration and synchronization diagnostics.
pub const EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), NetError> {
    if got != want {
        return Err(NetError::DimMismatch(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

fn petri_step(
    incidence: &IncidenceMatrices,
    q_s: &[f64],
    q_e: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    if !(dt > 0.0) {
        return Err(NetError::NonPositiveStep(dt));
    }
    let (np, nt) = (incidence.num_places(), incidence.num_transitions());
    check_len("place marking", q_s.len(), np)?;
    check_len("transition marking", q_e.len(), nt)?;
    check_len("U-", u_minus.len(), nt)?;
    check_len("U+", u_plus.len(), nt)?;

    let inject = incidence.m_plus.mul_vec(u_plus);
    let pull = incidence.m_minus.mul_vec(u_minus);
    let q_s_next = q_s
        .iter()
        .zip(inject.iter().zip(&pull))
        .map(|(q, (a, b))| q + a * dt - b * dt)
        .collect();
    let q_e_next = q_e
        .iter()
        .zip(u_plus.iter().zip(u_minus))
        .map(|(q, (up, um))| q - up * dt + um * dt)
        .collect();
    Ok((q_s_next, q_e_next))
}

/// One step of the engineering system net state transition function.
pub fn esn_step(
    q_b: &[f64],
    q_e: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
    incidence: &IncidenceMatrices,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    petri_step(incidence, q_b, q_e, u_minus, u_plus, dt)
}

/// One step of an operand net state transition function.
pub fn operand_net_step(
    q_s: &[f64],
    q_e: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
    incidence: &IncidenceMatrices,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    petri_step(incidence, q_s, q_e, u_minus, u_plus, dt)
}

/// Elementary Petri net whose places are (operand, buffer) pairs and whose
/// transitions are capabilities.
#[derive(Debug, Clone)]
pub struct EngineeringSystemNet {
    pub incidence: IncidenceMatrices,
    pub q_b: Vec<f64>,
    pub q_e: Vec<f64>,
}

impl EngineeringSystemNet {
    pub fn new(incidence: IncidenceMatrices, q_b: Vec<f64>) -> Result<Self, NetError> {
        check_len("initial place marking", q_b.len(), incidence.num_places())?;
        let q_e = vec![0.0; incidence.num_transitions()];
        Ok(Self {
            incidence,
            q_b,
            q_e,
        })
    }

    pub fn fire(&mut self, u_minus: &[f64], u_plus: &[f64], dt: f64) -> Result<(), NetError> {
        let (q_b, q_e) = esn_step(&self.q_b, &self.q_e, u_minus, u_plus, &self.incidence, dt)?;
        self.q_b = q_b;
        self.q_e = q_e;
        Ok(())
    }

    /// Places with a negative marking. Permitted, but worth surfacing.
    pub fn negative_places(&self) -> Vec<usize> {
        self.q_b
            .iter()
            .enumerate()
            .filter(|(_, &q)| q < 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-operand state-evolution net.
#[derive(Debug, Clone, PartialEq)]
pub struct OperandNet {
    pub operand: String,
    pub places: Vec<String>,
    pub transitions: Vec<String>,
    pub incidence: IncidenceMatrices,
    pub durations: Vec<usize>,
    pub initial: Vec<f64>,
}

impl OperandNet {
    pub fn new(
        operand: impl Into<String>,
        places: Vec<String>,
        transitions: Vec<String>,
        incidence: IncidenceMatrices,
        durations: Vec<usize>,
        initial: Vec<f64>,
    ) -> Result<Self, NetError> {
        check_len(
            "operand net incidence rows",
            incidence.num_places(),
            places.len(),
        )?;
        check_len(
            "operand net incidence cols",
            incidence.num_transitions(),
            transitions.len(),
        )?;
        check_len("operand net durations", durations.len(), transitions.len())?;
        check_len("operand net initial marking", initial.len(), places.len())?;
        Ok(Self {
            operand: operand.into(),
            places,
            transitions,
            incidence,
            durations,
            initial,
        })
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn step(
        &self,
        q_s: &[f64],
        q_e: &[f64],
        u_minus: &[f64],
        u_plus: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), NetError> {
        operand_net_step(q_s, q_e, u_minus, u_plus, &self.incidence, dt)
    }
}

/// Firing vectors over a horizon of `K` steps.
///
/// `operand_u_*` hold the stacked operand-net firings `U_L`, empty when the
/// model has no operand nets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FiringSchedule {
    pub u_minus: Vec<Vec<f64>>,
    pub u_plus: Vec<Vec<f64>>,
    pub operand_u_minus: Vec<Vec<f64>>,
    pub operand_u_plus: Vec<Vec<f64>>,
}

impl FiringSchedule {
    pub fn new(u_minus: Vec<Vec<f64>>, u_plus: Vec<Vec<f64>>) -> Self {
        let k = u_minus.len();
        Self {
            u_minus,
            u_plus,
            operand_u_minus: vec![Vec::new(); k],
            operand_u_plus: vec![Vec::new(); k],
        }
    }

    pub fn horizon(&self) -> usize {
        self.u_minus.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurationViolation {
    pub transition: usize,
    pub step: usize,
}

/// Checks `U⁺_ψ[k + k_dψ] = U⁻_ψ[k]` for every step whose completion lands
/// inside the horizon.
pub fn check_duration(
    u_minus: &[Vec<f64>],
    u_plus: &[Vec<f64>],
    durations: &[usize],
) -> Vec<DurationViolation> {
    let horizon = u_minus.len().min(u_plus.len());
    let mut violations = Vec::new();
    for (psi, &kd) in durations.iter().enumerate() {
        for k in 0..horizon {
            if k + kd >= horizon {
                break;
            }
            if (u_plus[k + kd][psi] - u_minus[k][psi]).abs() > EQUALITY_TOL {
                violations.push(DurationViolation {
                    transition: psi,
                    step: k,
                });
            }
        }
    }
    violations
}

/// Duration check of the engineering system net firings in a schedule.
pub fn check_schedule_duration(
    schedule: &FiringSchedule,
    durations: &[usize],
) -> Vec<DurationViolation> {
    check_duration(&schedule.u_minus, &schedule.u_plus, durations)
}

/// Selection matrices coupling engineering-system firings to the stacked
/// operand-net firings: `U⁺_L = Λ⁺ U⁺`, `U⁻_L = Λ⁻ U⁻`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMatrices {
    pub plus: CooMatrix,
    pub minus: CooMatrix,
}

impl SyncMatrices {
    /// No operand nets: zero rows.
    pub fn empty(num_capabilities: usize) -> Self {
        Self {
            plus: CooMatrix::zeros(0, num_capabilities),
            minus: CooMatrix::zeros(0, num_capabilities),
        }
    }

    /// One row per stacked operand transition; `Some(ψ)` selects capability ψ
    /// for both signs, `None` forces the operand transition to zero.
    pub fn from_selection(selection: &[Option<usize>], num_capabilities: usize) -> Self {
        let mut m = CooMatrix::zeros(selection.len(), num_capabilities);
        for (row, sel) in selection.iter().enumerate() {
            if let Some(psi) = sel {
                m.set(row, *psi, 1.0);
            }
        }
        Self {
            plus: m.clone(),
            minus: m,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.plus.rows()
    }

    /// At most one nonzero per row, all equal to 1.
    pub fn is_selection(&self) -> bool {
        [&self.plus, &self.minus].iter().all(|m| {
            (0..m.rows()).all(|r| {
                let row: Vec<_> = m.row_entries(r).collect();
                row.len() <= 1 && row.iter().all(|&(_, v)| v == 1.0)
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncViolation {
    pub plus: bool,
    pub row: usize,
    pub step: usize,
}

pub fn check_sync(schedule: &FiringSchedule, sync: &SyncMatrices) -> Vec<SyncViolation> {
    let mut violations = Vec::new();
    if sync.num_rows() == 0 {
        return violations;
    }
    for k in 0..schedule.horizon() {
        for (plus, lambda, u, u_l) in [
            (
                true,
                &sync.plus,
                &schedule.u_plus[k],
                &schedule.operand_u_plus[k],
            ),
            (
                false,
                &sync.minus,
                &schedule.u_minus[k],
                &schedule.operand_u_minus[k],
            ),
        ] {
            let selected = lambda.mul_vec(u);
            for (row, want) in selected.iter().enumerate() {
                let got = u_l.get(row).copied().unwrap_or(0.0);
                if (got - want).abs() > EQUALITY_TOL {
                    violations.push(SyncViolation { plus, row, step: k });
                }
            }
        }
    }
    violations
}

/// Runs the engineering system net over a schedule.
///
/// Rows `0..=K` hold markings; the firing columns of the final row are NaN
/// because no firing is scheduled there.
pub fn simulate_esn(
    net: &EngineeringSystemNet,
    schedule: &FiringSchedule,
    dt: f64,
    place_names: &[String],
    transition_names: &[String],
) -> Result<Trajectory, NetError> {
    check_len("place names", place_names.len(), net.incidence.num_places())?;
    check_len(
        "transition names",
        transition_names.len(),
        net.incidence.num_transitions(),
    )?;
    let mut names: Vec<String> = place_names.to_vec();
    names.extend(transition_names.iter().map(|t| format!("Q_E:{t}")));
    names.extend(transition_names.iter().map(|t| format!("U-:{t}")));
    names.extend(transition_names.iter().map(|t| format!("U+:{t}")));
    let mut traj = Trajectory::new(dt, names);

    let mut state = net.clone();
    for k in 0..=schedule.horizon() {
        let mut row = state.q_b.clone();
        row.extend(&state.q_e);
        if k < schedule.horizon() {
            row.extend(&schedule.u_minus[k]);
            row.extend(&schedule.u_plus[k]);
        } else {
            row.extend(std::iter::repeat_n(f64::NAN, 2 * transition_names.len()));
        }
        traj.push_row(&row)
            .expect("row width fixed by construction");
        if k < schedule.horizon() {
            state.fire(&schedule.u_minus[k], &schedule.u_plus[k], dt)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono_incidence() -> IncidenceMatrices {
        IncidenceMatrices::from_dense(
            &[vec![1., 1., 0., 0., 0., 1.], vec![0., 0., 0., 0., 1., 0.]],
            &[vec![0., 0., 1., 0., 1., 0.], vec![0., 0., 0., 1., 0., 1.]],
        )
        .unwrap()
    }

    #[test]
    fn esn_step_on_mono_matrices() {
        let u = [2.0, 3.0, 1.0, 1.0, 0.5, 0.2];
        let q_e = [0.0; 6];
        let (q_b, q_e2) = esn_step(&[100.0, 50.0], &q_e, &u, &u, &mono_incidence(), 1.0).unwrap();
        assert!((q_b[0] - 103.7).abs() < 1e-12);
        assert!((q_b[1] - 49.3).abs() < 1e-12);
        assert_eq!(q_e2, q_e.to_vec());
    }

    #[test]
    fn null_firing_is_identity() {
        let z = [0.0; 6];
        let (q_b, q_e) = esn_step(&[1.0, 2.0], &[3.0; 6], &z, &z, &mono_incidence(), 0.5).unwrap();
        assert_eq!(q_b, vec![1.0, 2.0]);
        assert_eq!(q_e, vec![3.0; 6]);
    }

    #[test]
    fn input_firing_puts_token_in_flight() {
        let mut um = [0.0; 6];
        um[0] = 1.0;
        let (_, q_e) = esn_step(
            &[0.0, 0.0],
            &[0.0; 6],
            &um,
            &[0.0; 6],
            &mono_incidence(),
            2.0,
        )
        .unwrap();
        assert_eq!(q_e[0], 2.0);
    }

    #[test]
    fn dims_and_step_checked() {
        let inc = mono_incidence();
        assert!(matches!(
            esn_step(&[0.0], &[0.0; 6], &[0.0; 6], &[0.0; 6], &inc, 1.0),
            Err(NetError::DimMismatch(_))
        ));
        assert!(matches!(
            esn_step(&[0.0; 2], &[0.0; 6], &[0.0; 6], &[0.0; 6], &inc, 0.0),
            Err(NetError::NonPositiveStep(_))
        ));
    }

    #[test]
    fn chain_operand_net() {
        // raw -> processed
        let inc = IncidenceMatrices::from_dense(&[vec![0.0], vec![1.0]], &[vec![1.0], vec![0.0]])
            .unwrap();
        let (q_s, q_e) = operand_net_step(&[5.0, 0.0], &[0.0], &[1.0], &[1.0], &inc, 1.0).unwrap();
        assert_eq!(q_s, vec![4.0, 1.0]);
        assert_eq!(q_e, vec![0.0]);
        let (same, _) = operand_net_step(&[5.0, 0.0], &[0.0], &[0.0], &[0.0], &inc, 1.0).unwrap();
        assert_eq!(same, vec![5.0, 0.0]);
    }

    #[test]
    fn duration_checks() {
        let zeros = || vec![vec![0.0]; 4];
        // instantaneous, equal firings
        let u = vec![vec![1.0], vec![2.0], vec![0.5], vec![0.0]];
        assert!(check_duration(&u, &u, &[0]).is_empty());

        let mut um = zeros();
        let mut up = zeros();
        um[0][0] = 1.0;
        up[2][0] = 1.0;
        assert!(check_duration(&um, &up, &[2]).is_empty());

        up[2][0] = 0.0;
        assert_eq!(
            check_duration(&um, &up, &[2]),
            vec![DurationViolation {
                transition: 0,
                step: 0
            }]
        );
    }

    #[test]
    fn sync_checks() {
        let u = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        let mut s = FiringSchedule::new(u.clone(), u.clone());
        assert!(check_sync(&s, &SyncMatrices::empty(4)).is_empty());

        s.operand_u_minus = u.clone();
        s.operand_u_plus = u.clone();
        let identity = SyncMatrices {
            plus: CooMatrix::identity(4),
            minus: CooMatrix::identity(4),
        };
        assert!(identity.is_selection());
        assert!(check_sync(&s, &identity).is_empty());

        let pick3 = SyncMatrices::from_selection(&[Some(3)], 4);
        s.operand_u_minus = vec![vec![4.0]; 3];
        s.operand_u_plus = vec![vec![4.0]; 3];
        assert!(check_sync(&s, &pick3).is_empty());
        s.operand_u_plus[1][0] = 3.5;
        assert_eq!(
            check_sync(&s, &pick3),
            vec![SyncViolation {
                plus: true,
                row: 0,
                step: 1
            }]
        );
    }

    #[test]
    fn simulate_records_markings_and_firings() {
        let net = EngineeringSystemNet::new(mono_incidence(), vec![10.0, 5.0]).unwrap();
        let u = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 3];
        let s = FiringSchedule::new(u.clone(), u);
        let places = vec!["lake".to_string(), "aquifer".to_string()];
        let caps: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let t = simulate_esn(&net, &s, 1.0, &places, &caps).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.column("lake").unwrap(), &[10.0, 11.0, 12.0, 13.0]);
        assert!(t.column("U-:c0").unwrap()[3].is_nan());
    }
}
