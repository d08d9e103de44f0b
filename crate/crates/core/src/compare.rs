//! Engine-to-engine trajectory comparison.

use crate::trajectory::Trajectory;

/// `100 · RMSE(a − b) / mean(|oracle|)`, in percent. Zero when both
/// series vanish identically.
pub fn nrmse(candidate: &[f64], oracle: &[f64]) -> f64 {
    let n = candidate.len().min(oracle.len());
    if n == 0 {
        return 0.0;
    }
    let mse = candidate
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64;
    let norm = oracle[..n].iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if mse == 0.0 {
        return 0.0;
    }
    if norm == 0.0 {
        return f64::INFINITY;
    }
    100.0 * mse.sqrt() / norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableComparison {
    pub name: String,
    pub nrmse_percent: f64,
    pub max_abs_deviation: f64,
    /// First step whose deviation exceeds `divergence_tol`.
    pub first_divergence: Option<usize>,
}

pub fn compare_variable(
    name: &str,
    candidate: &[f64],
    oracle: &[f64],
    divergence_tol: f64,
) -> VariableComparison {
    let dev: Vec<f64> = candidate
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs())
        .collect();
    VariableComparison {
        name: name.to_string(),
        nrmse_percent: nrmse(candidate, oracle),
        max_abs_deviation: dev.iter().cloned().fold(0.0, f64::max),
        first_divergence: dev.iter().position(|&d| !(d <= divergence_tol)),
    }
}

/// Compares the named columns; `None` if a column is missing or the
/// lengths differ.
pub fn compare_trajectories(
    candidate: &Trajectory,
    oracle: &Trajectory,
    names: &[&str],
    divergence_tol: f64,
) -> Option<Vec<VariableComparison>> {
    names
        .iter()
        .map(|n| {
            let (a, b) = (candidate.column(n)?, oracle.column(n)?);
            (a.len() == b.len()).then(|| compare_variable(n, a, b, divergence_tol))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_comparison_is_zero() {
        let a = [3.0, 2.0, 1.0];
        assert_eq!(nrmse(&a, &a), 0.0);
    }

    #[test]
    fn hand_computed() {
        // errors (1, -1): rmse 1, mean |oracle| 2
        assert!((nrmse(&[2.0, 2.0], &[1.0, 3.0]) - 50.0).abs() < 1e-12);
        let c = compare_variable("v", &[2.0, 2.0], &[2.0, 3.0], 0.5);
        assert_eq!(c.first_divergence, Some(1));
        assert_eq!(c.max_abs_deviation, 1.0);
    }
}
