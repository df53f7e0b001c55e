use super::{solve, FlowProblem, ParabolicError, SolverConfig};
use crate::grid::{sup_norm_diff, Trajectory};
use crate::herm::HermMat;
use rayon::prelude::*;

/// Result of a vanishing-viscosity sweep over `ω_t + εΘ`.
#[derive(Clone, Debug)]
pub struct ViscosityReport {
    pub eps: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// Node/time pairs with `φ(ε) > φ(ε') + tol` for `ε < ε'` (adjacent
    /// entries of the list).
    pub violations: usize,
    /// Largest `φ(ε) − φ(ε')` seen for `ε < ε'`.
    pub worst_excess: f64,
    /// Sup over snapshots of `|φ(ε) − φ(0)|`, one per entry.
    pub gaps: Vec<f64>,
}

pub fn vanishing_viscosity_sweep(
    problem: &FlowProblem,
    theta: HermMat,
    eps: &[f64],
    tol: f64,
    config: &SolverConfig,
) -> Result<ViscosityReport, ParabolicError> {
    let n = problem.n();
    if theta.min_eigenvalue(n) <= 0.0 {
        return Err(ParabolicError::Sweep("Theta must be positive definite".into()));
    }
    if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(ParabolicError::Sweep("eps values must be finite and >= 0".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ParabolicError::Sweep("eps list must be strictly decreasing".into()));
    }
    let mut all = eps.to_vec();
    if *all.last().unwrap() != 0.0 {
        all.push(0.0);
    }
    let runs: Vec<Result<Trajectory, ParabolicError>> = all
        .par_iter()
        .map(|&e| {
            let p = if e == 0.0 { problem.clone() } else { problem.shifted(problem.shift + e * theta) };
            solve(&p, config)
        })
        .collect();
    let runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_, _>>()?;

    let (mut violations, mut worst) = (0usize, f64::NEG_INFINITY);
    for w in runs.windows(2) {
        // w[0] has the larger ε.
        for (big, small) in w[0].snapshots.iter().zip(&w[1].snapshots) {
            for (&b, &s) in big.values().iter().zip(small.values()) {
                worst = worst.max(s - b);
                if s > b + tol {
                    violations += 1;
                }
            }
        }
    }
    let base = runs.last().unwrap();
    let mut gaps = Vec::with_capacity(eps.len());
    for tr in &runs[..eps.len()] {
        let mut g: f64 = 0.0;
        for (a, b) in tr.snapshots.iter().zip(&base.snapshots) {
            g = g.max(sup_norm_diff(a, b).expect("same grid"));
        }
        gaps.push(g);
    }
    let mut trajectories = runs;
    trajectories.truncate(eps.len());
    Ok(ViscosityReport { eps: eps.to_vec(), trajectories, violations, worst_excess: worst, gaps })
}
