use super::{digest_of, discretization_tol, fit_decay_exponent, Check, Scenario, ScenarioError, ScenarioReport};
use crate::background::{BackgroundFamily, ClassSchedule, TimeFn};
use crate::elliptic::{solve_static, StaticProblem};
use crate::grid::{sup_norm_diff, ScalarField, TorusGrid};
use crate::herm::HermMat;
use crate::parabolic::{
    change_time_variable, h_profile, solve, solve_detailed, transformed_problem, DensitySpec, DtRule, FlowProblem,
    ForcingSpec, SolverConfig,
};
use crate::report::{fmt9, Table};
use crate::verify::{check_subsolution, check_supersolution, check_times, ke_lower_barrier, ke_upper_barrier};
use std::f64::consts::PI;

/// Normalized flow `(ω_t + dd^cφ)^n = e^{∂_tφ + φ}μ` with
/// `ω_t = e^{−t}A + (1 − e^{−t})B` converging to the static solution on `B`.
///
/// Defaults: `A = B = 3.2·I`, `μ = 3.2 + 0.2cos(2πy₁)`, `φ₀ = φ_KE + 0.3cos(2πx₁)`.
/// The class must exceed `0.3π²` for `φ₀` to stay psh.
#[derive(Clone, Debug)]
pub struct CanonicalModel {
    pub m: usize,
    pub horizon: f64,
    /// Fixed backward Euler step of the long run.
    pub dt: f64,
    pub class_a: f64,
    pub class_b: f64,
    pub density_amp: f64,
    pub perturbation: f64,
    pub fit_window: (f64, f64),
    /// Relative slack of the fitted exponent around `−1`.
    pub fit_slack: f64,
    /// Noise floor unit for the fit; defaults to the static solve tolerance.
    pub fit_tol: Option<f64>,
    /// Horizon of the explicit runs compared through the time change.
    pub time_change_horizon: f64,
    pub time_change_tol: f64,
    pub config: SolverConfig,
}

pub fn scenario_canonical_model(resolution: usize, horizon: f64) -> CanonicalModel {
    CanonicalModel {
        m: resolution,
        horizon,
        dt: 0.01,
        class_a: 3.2,
        class_b: 3.2,
        density_amp: 0.2,
        perturbation: 0.3,
        fit_window: (1.0, 4.0),
        fit_slack: 0.15,
        fit_tol: None,
        time_change_horizon: 0.5,
        time_change_tol: 1e-3,
        config: SolverConfig::default(),
    }
}

/// Times at which the literal bounds are checked.
const BOUND_TIMES: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

fn label(prefix: &str, t: f64) -> String {
    format!("{prefix}@t={}", fmt9(t))
}

impl CanonicalModel {
    fn grid(&self) -> Result<TorusGrid, ScenarioError> {
        Ok(TorusGrid::new(1, self.m)?)
    }

    pub fn density(&self, g: TorusGrid) -> Result<DensitySpec, ScenarioError> {
        let (c, amp) = (self.class_b, self.density_amp);
        Ok(DensitySpec::positive(ScalarField::from_fn(g, |x| c + amp * (2.0 * PI * x[1]).cos()), TimeFn::One)?)
    }

    /// `φ_KE` on `B` and the flow problem started at `φ_KE + perturbation`.
    pub fn setup(&self, horizon: f64) -> Result<(ScalarField, FlowProblem), ScenarioError> {
        let g = self.grid()?;
        let (a, b) = (HermMat::scalar(1, self.class_a), HermMat::scalar(1, self.class_b));
        let mu = self.density(g)?;
        let ke = solve_static(&StaticProblem::flat(g, b, mu.clone(), 1.0)?, &self.config)?.phi;
        let amp = self.perturbation;
        let phi0 = ke.add(&ScalarField::from_fn(g, |x| amp * (2.0 * PI * x[0]).cos()));
        let fam = BackgroundFamily::new(g, ClassSchedule::nkrf(1, a, b)?, None, None, None, horizon)?;
        let p = FlowProblem::new("canonical_model", fam, mu, ForcingSpec::linear(1.0), phi0, horizon)?;
        Ok((ke, p))
    }

    fn time_change(&self, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
        let th = self.time_change_horizon;
        let (_, p) = self.setup(th)?;
        let ts: Vec<f64> = (1..=5).map(|k| th * k as f64 / 5.0).collect();
        let explicit = self.config.clone().with_stepper("explicit_euler");
        let traj = solve(&p, &explicit.clone().with_snapshots(ts.clone()))?;
        let mapped = change_time_variable(&traj, 1.0, 0.0, 0.0)?.trajectory;
        let q = transformed_problem(&p, 0.0, &p.phi0)?;
        let direct = solve(&q, &explicit.with_snapshots(mapped.times[1..].to_vec()))?;
        let mut table = Table::new(&["t", "s", "sup_diff"]);
        let mut worst: f64 = 0.0;
        for k in 1..mapped.times.len() {
            let d = sup_norm_diff(&mapped.snapshots[k], &direct.snapshots[k])?;
            worst = worst.max(d);
            table.push(vec![fmt9(traj.times[k]), fmt9(mapped.times[k]), fmt9(d)]);
        }
        report.checks.push(Check::at_most("time_change_agreement", worst, self.time_change_tol));
        report.series.push(("time_change".into(), table));
        Ok(())
    }
}

impl Scenario for CanonicalModel {
    fn name(&self) -> &'static str {
        "canonical_model"
    }

    fn run(&self) -> Result<ScenarioReport, ScenarioError> {
        if !(self.horizon >= self.fit_window.1 && self.dt > 0.0) {
            return Err(ScenarioError::Parameter(format!(
                "horizon {} must reach the fit window end {} and dt must be positive",
                self.horizon, self.fit_window.1
            )));
        }
        let mut report = ScenarioReport::new(self.name(), digest_of(self));
        let (ke, p) = self.setup(self.horizon)?;
        let g = *p.grid();
        let h = g.h_max();
        let mut snaps: Vec<f64> = (1..).map(|k| 0.25 * k as f64).take_while(|&t| t < self.horizon).collect();
        snaps.extend(BOUND_TIMES);
        let cfg =
            self.config.clone().with_stepper("backward_euler").with_dt(DtRule::Fixed(self.dt)).with_snapshots(snaps);
        let run = solve_detailed(&p, &cfg)?;
        let traj = &run.trajectory;
        let tol = discretization_tol(h, run.dt_max);
        let gap0 = sup_norm_diff(&p.phi0, &ke)?;

        let lower = ke_lower_barrier(&p.phi0, &ke, 1);
        let upper = ke_upper_barrier(&p.phi0, &ke, 1);
        let mut series = Table::new(&["t", "gap", "bound", "min_diff", "h_bound", "lower_excess", "upper_excess"]);
        let (mut gaps, mut lo_excess, mut hi_excess) = (Vec::new(), f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (&t, s) in traj.times.iter().zip(&traj.snapshots) {
            let gap = sup_norm_diff(s, &ke)?;
            let bound = gap0 * (-t).exp();
            let min_diff = s.sub(&ke).min();
            let hb = h_profile(t, 1) * (-t).exp();
            let le = lower.value_at(t).sub(s).max();
            let ue = s.sub(&upper.value_at(t)).max();
            lo_excess = lo_excess.max(le);
            hi_excess = hi_excess.max(ue);
            gaps.push(gap);
            series.push(vec![fmt9(t), fmt9(gap), fmt9(bound), fmt9(min_diff), fmt9(hb), fmt9(le), fmt9(ue)]);
            if BOUND_TIMES.iter().any(|&b| (b - t).abs() < 1e-12) {
                report.checks.push(Check::at_most(label("contraction", t), gap - bound, tol));
                if t >= 1.0 {
                    report.checks.push(Check::at_least(label("h_lower_bound", t), min_diff - hb, -tol));
                }
            }
        }
        let fit_tol = self.fit_tol.unwrap_or(self.config.stationarity_tol);
        let slope = fit_decay_exponent(&traj.times, &gaps, self.fit_window, fit_tol).unwrap_or(f64::NAN);
        report.checks.push(Check::relative("decay_exponent", slope, -1.0, self.fit_slack));
        report.checks.push(Check::at_most("lower_barrier_bound", lo_excess, tol));
        report.checks.push(Check::at_most("upper_barrier_bound", hi_excess, tol));
        let times = check_times(self.horizon);
        let sub = check_subsolution(&lower, &p, &times, tol, None);
        let sup = check_supersolution(&upper, &p, &times, tol, None);
        report.checks.push(Check::at_least("lower_barrier_residual", sub.worst_residual, -tol));
        report.checks.push(Check::at_most("upper_barrier_residual", sup.worst_residual, tol));
        report.series.push(("gap".into(), series));

        self.time_change(&mut report)?;
        report.snapshots.push(("phi_ke".into(), ke));
        report.snapshots.push(("phi_final".into(), traj.last().clone()));
        Ok(report)
    }
}
