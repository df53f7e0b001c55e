//! The change of time variable that turns the `F = αφ` flow into the
//! `F = 0` flow: with `s − s₀ = (e^{α(t−t₀)} − 1)/α` and
//! `f(s) = 1 + α(s − s₀)`,
//!
//! `ψ(s) = f(s)·φ(t(s))`, `ω̃_s = f(s)·ω_{t(s)}`, `μ̃_s = f(s)^n·μ_{t(s)}`.
//!
//! Then `∂_sψ = ∂_tφ + αφ` and `(ω̃_s + dd^cψ)^n = e^{∂_sψ}μ̃_s`.

use super::{DensitySpec, FlowProblem, ForcingSpec, ParabolicError};
use crate::background::{Retime, TimeFn};
use crate::grid::{ScalarField, SnapshotStats, Trajectory, TrajectoryMeta};

/// A re-timed trajectory together with the map that produced it.
#[derive(Clone, Debug)]
pub struct TimeChange {
    pub trajectory: Trajectory,
    pub retime: Retime,
}

fn retime_for(alpha: f64, t0: f64, s0: f64) -> Result<Retime, ParabolicError> {
    Retime::new(alpha, t0, s0).map_err(|e| ParabolicError::TimeChange(e.to_string()))
}

/// Maps every snapshot at `t ≥ t₀` to `s = s(t)` with `ψ = f(s)·φ(t)`.
pub fn change_time_variable(traj: &Trajectory, alpha: f64, t0: f64, s0: f64) -> Result<TimeChange, ParabolicError> {
    let retime = retime_for(alpha, t0, s0)?;
    if traj.at(t0).is_none() {
        return Err(ParabolicError::TimeChange(format!(
            "no snapshot at t0 = {t0} (trajectory covers [0, {}])",
            traj.final_time()
        )));
    }
    let mut out: Option<Trajectory> = None;
    for ((&t, phi), st) in traj.times.iter().zip(&traj.snapshots).zip(&traj.stats) {
        if t < t0 - 1e-9 * (1.0 + t0.abs()) {
            continue;
        }
        let (s, psi) = if out.is_none() {
            (s0, phi.clone())
        } else {
            let s = retime.s_of_t(t);
            (s, phi.scale(retime.factor(s)))
        };
        match &mut out {
            None => {
                let meta = TrajectoryMeta {
                    problem_id: format!("{}_retimed", traj.meta.problem_id),
                    config_digest: traj.meta.config_digest.clone(),
                };
                let mut tr = Trajectory::new(psi, meta);
                tr.times[0] = s;
                tr.stats[0] = *st;
                out = Some(tr);
            }
            Some(tr) => tr.push(s, psi, SnapshotStats { ..*st }),
        }
    }
    Ok(TimeChange { trajectory: out.expect("t0 snapshot present"), retime })
}

/// The `F = 0` problem solved by the re-timed trajectory, starting at
/// `s₀ = 0` from `phi_t0 = φ(t₀)` and running to `s(T)`.
pub fn transformed_problem(
    problem: &FlowProblem,
    t0: f64,
    phi_t0: &ScalarField,
) -> Result<FlowProblem, ParabolicError> {
    let alpha = match problem.forcing {
        ForcingSpec::Linear { alpha, anchor, drift } if anchor == 0.0 && drift == 0.0 => alpha,
        _ => return Err(ParabolicError::TimeChange("needs forcing F = alpha*r".into())),
    };
    if !(t0 >= 0.0 && t0 < problem.horizon) {
        return Err(ParabolicError::TimeChange(format!("t0 = {t0} outside [0, {})", problem.horizon)));
    }
    let retime = retime_for(alpha, t0, 0.0)?;
    let s_end = retime.s_of_t(problem.horizon);
    let family = problem.family.retimed(retime, s_end)?;
    let mu = DensitySpec::with_time(
        &problem.mu,
        TimeFn::Retimed { inner: Box::new(problem.mu.time.clone()), retime, power: problem.n() as i32 },
    );
    let p = FlowProblem {
        id: format!("{}_retimed", problem.id),
        family,
        shift: problem.shift,
        mu,
        forcing: ForcingSpec::zero(),
        phi0: phi_t0.clone(),
        horizon: s_end,
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    fn traj(times: &[f64]) -> Trajectory {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = |t: f64| ScalarField::from_fn(g, |x| t + x[0]);
        let mut tr = Trajectory::new(f(0.0), TrajectoryMeta::default());
        for &t in times {
            tr.push(t, f(t), SnapshotStats::default());
        }
        tr
    }

    #[test]
    fn base_time_is_bit_exact() {
        let tr = traj(&[0.5, 1.0]);
        let tc = change_time_variable(&tr, 0.7, 0.5, 3.0).unwrap();
        assert_eq!(tc.trajectory.times[0], 3.0);
        assert_eq!(tc.trajectory.snapshots[0], tr.snapshots[1]);
        assert_eq!(tc.trajectory.times.len(), 2);
    }

    #[test]
    fn log_two_maps_to_one() {
        let l2 = 2f64.ln();
        let tr = traj(&[l2]);
        let tc = change_time_variable(&tr, 1.0, 0.0, 0.0).unwrap();
        assert!((tc.trajectory.times[1] - 1.0).abs() < 1e-15);
        let want = tr.snapshots[1].scale(2.0);
        for (a, b) in tc.trajectory.snapshots[1].values().iter().zip(want.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_rate_and_range() {
        let tr = traj(&[1.0]);
        assert!(change_time_variable(&tr, 0.0, 0.0, 0.0).is_err());
        assert!(change_time_variable(&tr, 1.0, 2.0, 0.0).is_err());
    }
}
