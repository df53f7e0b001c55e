use super::{stepper_by_name, DtRule, FlowProblem, ParabolicError, SolverConfig, StepSize, Stepper};
use crate::background::sample_times;
use crate::grid::{ScalarField, SnapshotStats, Trajectory, TrajectoryMeta};
use crate::ma_ops::{RhsContext, RhsStats};

/// Trajectory plus run statistics.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub steps: usize,
    pub floor_activations: u64,
    /// `max |rhs|` at the final state.
    pub final_max_abs_rhs: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub early_stopped: bool,
}

/// One step of the configured stepper with a fixed `dt`.
pub fn step(
    phi: &ScalarField,
    t: f64,
    dt: f64,
    problem: &FlowProblem,
    config: &SolverConfig,
) -> Result<(ScalarField, RhsStats), ParabolicError> {
    let stepper =
        stepper_by_name(&config.stepper).ok_or_else(|| ParabolicError::UnknownStepper(config.stepper.clone()))?;
    let ctx = RhsContext::new(problem, config);
    let mut out = vec![0.0; phi.len()];
    let stats = stepper.advance(&ctx, phi.values(), t, &mut |_| StepSize::plain(dt), &mut out)?;
    check_finite(&out, stats.bad_node, t)?;
    Ok((ScalarField::from_raw(*phi.grid(), out), stats))
}

fn check_finite(v: &[f64], bad: Option<usize>, t: f64) -> Result<(), ParabolicError> {
    if let Some(node) = bad.or_else(|| v.iter().position(|x| !x.is_finite())) {
        return Err(ParabolicError::NonFinite { t, node });
    }
    Ok(())
}

/// Step chosen by `config.dt_rule` given the rhs statistics at the current
/// state: `c / (W/max(m_min, det_floor^{1/n}) + κ)` for the CFL rule.
pub fn step_size(problem: &FlowProblem, config: &SolverConfig, stats: &RhsStats) -> f64 {
    match config.dt_rule {
        DtRule::Fixed(dt) => dt,
        DtRule::Cfl { c } => {
            let m_floor = config.det_floor.powf(1.0 / problem.n() as f64);
            c / (problem.grid().center_weight() / stats.min_eig.max(m_floor) + problem.forcing.lipschitz())
        }
    }
}

/// Runs the flow on `[0, T]` and returns snapshots at the requested times.
pub fn solve(problem: &FlowProblem, config: &SolverConfig) -> Result<Trajectory, ParabolicError> {
    solve_detailed(problem, config).map(|r| r.trajectory)
}

pub fn solve_detailed(problem: &FlowProblem, config: &SolverConfig) -> Result<SolveReport, ParabolicError> {
    run(problem, config, None)
}

/// `e^{h(t)∂_tφ + F}μ = (ω_t + dd^cφ)^n`: every step uses
/// `φ' = φ + (dt/h(t))·rhs`, and the CFL step is scaled by `h(t)`.
pub fn solve_twisted(
    problem: &FlowProblem,
    h: &(dyn Fn(f64) -> f64 + Sync),
    config: &SolverConfig,
) -> Result<SolveReport, ParabolicError> {
    for t in sample_times(problem.horizon, 64) {
        let v = h(t);
        if !(v > 0.0 && v.is_finite()) {
            return Err(ParabolicError::Twist { t, value: v });
        }
    }
    run(problem, config, Some(h))
}

fn snapshot_targets(horizon: f64, requested: &[f64]) -> Vec<f64> {
    let mut ts: Vec<f64> = requested.iter().copied().filter(|&t| t > 0.0 && t < horizon).collect();
    ts.push(horizon);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    ts
}

fn run(
    problem: &FlowProblem,
    config: &SolverConfig,
    twist: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<SolveReport, ParabolicError> {
    problem.validate(config.tol_psh)?;
    let stepper: Box<dyn Stepper> =
        stepper_by_name(&config.stepper).ok_or_else(|| ParabolicError::UnknownStepper(config.stepper.clone()))?;
    let ctx = RhsContext::new(problem, config);
    let g = *problem.grid();
    let base_dt = |s: &RhsStats| step_size(problem, config, s);

    let meta = TrajectoryMeta { problem_id: problem.id.clone(), config_digest: config.digest() };
    let mut traj = Trajectory::new(problem.phi0.clone(), meta);
    let mut phi = problem.phi0.values().to_vec();
    let mut next = vec![0.0; phi.len()];
    let s0 = ctx.eval(&phi, 0.0, &mut next);
    check_finite(&next, s0.bad_node, 0.0)?;
    traj.stats[0] = SnapshotStats { floor_activations: s0.floor_activations, max_abs_rhs: s0.max_abs };

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut floors = 0u64;
    let (mut dt_min, mut dt_max) = (f64::INFINITY, 0.0f64);
    let mut last_max = s0.max_abs;
    let mut early = false;

    'targets: for target in snapshot_targets(problem.horizon, &config.snapshot_times) {
        loop {
            let remaining = target - t;
            if remaining <= 1e-12 * target.max(1.0) {
                break;
            }
            if steps >= config.max_steps {
                return Err(ParabolicError::StepBudget { steps, t });
            }
            let hval = twist.map_or(1.0, |h| h(t));
            let mut taken = 0.0;
            let mut choose = |s: &RhsStats| {
                let mut dt = base_dt(s);
                if twist.is_some() && !matches!(config.dt_rule, DtRule::Fixed(_)) {
                    dt *= hval;
                }
                if dt >= remaining * (1.0 - 1e-12) {
                    dt = remaining;
                }
                taken = dt;
                StepSize { dt, weight: dt / hval }
            };
            let stats = stepper.advance(&ctx, &phi, t, &mut choose, &mut next)?;
            if config.early_stop && stats.max_abs <= config.stationarity_tol {
                early = true;
                last_max = stats.max_abs;
                if t > traj.final_time() {
                    traj.push(
                        t,
                        ScalarField::from_raw(g, phi.clone()),
                        SnapshotStats { floor_activations: floors, max_abs_rhs: stats.max_abs },
                    );
                }
                break 'targets;
            }
            if !(taken >= 1e-12) {
                return Err(ParabolicError::DtUnderflow { t, dt: taken });
            }
            check_finite(&next, stats.bad_node, t)?;
            std::mem::swap(&mut phi, &mut next);
            floors += stats.floor_activations;
            dt_min = dt_min.min(taken);
            dt_max = dt_max.max(taken);
            steps += 1;
            t = if taken == remaining { target } else { t + taken };
        }
        t = target;
        let s = ctx.eval(&phi, t, &mut next);
        check_finite(&next, s.bad_node, t)?;
        last_max = s.max_abs;
        traj.push(
            t,
            ScalarField::from_raw(g, phi.clone()),
            SnapshotStats { floor_activations: floors, max_abs_rhs: s.max_abs },
        );
    }
    Ok(SolveReport {
        trajectory: traj,
        steps,
        floor_activations: floors,
        final_max_abs_rhs: last_max,
        dt_min,
        dt_max,
        early_stopped: early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{BackgroundFamily, TimeFn};
    use crate::grid::TorusGrid;
    use crate::herm::HermMat;
    use crate::parabolic::{DensitySpec, ForcingSpec};

    fn flat(alpha: f64, c: f64, horizon: f64) -> FlowProblem {
        let g = TorusGrid::new(1, 16).unwrap();
        let fam = BackgroundFamily::constant(g, HermMat::identity(1), horizon).unwrap();
        let mu = DensitySpec::positive(ScalarField::constant(g, 1.0), TimeFn::One).unwrap();
        FlowProblem::new("flat", fam, mu, ForcingSpec::linear(alpha), ScalarField::constant(g, c), horizon).unwrap()
    }

    #[test]
    fn flat_stationary_step_is_identity() {
        let p = flat(0.0, 0.0, 1.0);
        let (out, _) = step(&p.phi0, 0.0, 1e-3, &p, &SolverConfig::default()).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_forcing_step_and_ode() {
        let p = flat(1.0, 0.8, 1.0);
        let (out, _) = step(&p.phi0, 0.0, 1e-2, &p, &SolverConfig::default()).unwrap();
        assert!(out.values().iter().all(|&v| (v - (0.8 - 0.01 * 0.8)).abs() < 1e-15));
        // Explicit Euler's global error on φ' = −φ peaks at 0.8·e^{−1}·dt/2,
        // so 1e-4 needs dt below 6.8e-4.
        let cfg = SolverConfig::default().with_dt(DtRule::Fixed(5e-4)).with_snapshots(vec![0.25, 0.5]);
        let traj = solve(&p, &cfg).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.25, 0.5, 1.0]);
        for (t, s) in traj.times.iter().zip(&traj.snapshots) {
            assert!((s.values()[0] - 0.8 * (-t).exp()).abs() < 1e-4);
        }
        assert_eq!(traj.snapshots[0], p.phi0);
    }

    #[test]
    #[ignore = "explicit Euler error at dt=1e-3 is 1.47e-4 near t=1, above the 1e-4 bound"]
    fn linear_forcing_ode_at_literal_step() {
        let p = flat(1.0, 0.8, 1.0);
        let traj = solve(&p, &SolverConfig::default().with_dt(DtRule::Fixed(1e-3))).unwrap();
        assert!((traj.last().values()[0] - 0.8 * (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn twisted_identity_and_half_rate() {
        let p = flat(1.0, 0.8, 1.0);
        let cfg = SolverConfig::default().with_dt(DtRule::Fixed(1e-3));
        let a = solve(&p, &cfg).unwrap();
        let b = solve_twisted(&p, &|_| 1.0, &cfg).unwrap().trajectory;
        assert_eq!(a.snapshots, b.snapshots);
        let c = solve_twisted(&p, &|_| 2.0, &cfg).unwrap().trajectory;
        assert!((c.last().values()[0] - 0.8 * (-0.5f64).exp()).abs() < 1e-4);
        assert!(solve_twisted(&p, &|t| 0.5 - t, &cfg).is_err());
    }

    #[test]
    fn budget_and_unknown_stepper() {
        let p = flat(1.0, 0.8, 1.0);
        let mut cfg = SolverConfig::default().with_dt(DtRule::Fixed(1e-3));
        cfg.max_steps = 3;
        assert!(matches!(solve(&p, &cfg), Err(ParabolicError::StepBudget { .. })));
        let cfg = SolverConfig::default().with_stepper("rk4");
        assert!(matches!(solve(&p, &cfg), Err(ParabolicError::UnknownStepper(_))));
    }

    #[test]
    fn backward_euler_matches_scalar_ode() {
        let p = flat(1.0, 0.8, 1.0);
        let cfg = SolverConfig::default().with_dt(DtRule::Fixed(5e-4)).with_stepper("backward_euler");
        let traj = solve(&p, &cfg).unwrap();
        assert!((traj.last().values()[0] - 0.8 * (-1.0f64).exp()).abs() < 1e-4);
    }
}
