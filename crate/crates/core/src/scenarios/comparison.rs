use super::{digest_of, Check, Scenario, ScenarioError, ScenarioReport};
use crate::background::{BackgroundFamily, ClassSchedule, Rule, TimeFn};
use crate::grid::{ScalarField, TorusGrid};
use crate::herm::HermMat;
use crate::ma_ops::RhsContext;
use crate::parabolic::{
    solve_detailed, step_size, DensitySpec, ExplicitEuler, FlowProblem, ForcingSpec, SolverConfig, StepSize, Stepper,
};
use crate::report::{fmt9, Table};
use crate::verify::{
    build_subbarrier, build_superbarrier, check_times, comparison_gap, report_table, SubbarrierOptions,
};
use rayon::prelude::*;
use std::f64::consts::PI;

/// One problem of the comparison catalog and the hypothesis set it exercises.
#[derive(Clone, Debug)]
pub struct CatalogProblem {
    pub id: &'static str,
    pub hypothesis: &'static str,
    pub problem: FlowProblem,
}

fn datum(g: TorusGrid) -> ScalarField {
    ScalarField::from_fn(g, |x| 0.01 * (2.0 * PI * x[0]).cos() + 0.005 * (2.0 * PI * (x[0] + x[1])).sin())
}

fn spatial_density(g: TorusGrid) -> ScalarField {
    ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos())
}

/// The five `n = 1` problems, one per hypothesis set.
pub fn catalog(m: usize) -> Result<Vec<CatalogProblem>, ScenarioError> {
    let g = TorusGrid::new(1, m)?;
    let id = HermMat::identity(1);
    let half = HermMat::scalar(1, 0.5);
    let mu = DensitySpec::positive(spatial_density(g), TimeFn::One)?;
    let make = |id: &'static str,
                hypothesis: &'static str,
                schedule: ClassSchedule,
                mu: DensitySpec,
                forcing: ForcingSpec,
                horizon: f64|
     -> Result<CatalogProblem, ScenarioError> {
        let fam = BackgroundFamily::new(g, schedule, None, None, None, horizon)?;
        let problem = FlowProblem::new(id, fam, mu, forcing, datum(g), horizon)?;
        Ok(CatalogProblem { id, hypothesis, problem })
    };
    Ok(vec![
        make(
            "positive_density",
            "positive density, general family",
            ClassSchedule::nkrf(1, id, half)?,
            mu.clone(),
            ForcingSpec::linear(1.0),
            0.5,
        )?,
        make(
            "bounded_time_derivative",
            "time-dependent density with bounded time derivative",
            ClassSchedule::krf(1, id, half)?,
            mu.with_time(TimeFn::Sine { amp: 0.3, freq: 4.0 }),
            ForcingSpec::zero(),
            0.5,
        )?,
        make(
            "constant_family",
            "constant family, time-independent density",
            ClassSchedule::constant(1, id)?,
            mu.clone(),
            ForcingSpec::zero(),
            0.5,
        )?,
        make(
            "monotone_family",
            "family (1+t)I, monotone in t",
            ClassSchedule::krf(1, id, id)?,
            mu.clone(),
            ForcingSpec::linear(0.5),
            0.5,
        )?,
        // Past t = π/2 the family (1 + 0.2 sin t)I is no longer monotone.
        make(
            "regular_family",
            "family (1 + 0.2 sin t)I, regular but not monotone",
            ClassSchedule::new(1, id, id, Rule::Scaled(TimeFn::Sine { amp: 0.2, freq: 1.0 }))?,
            mu,
            ForcingSpec::zero(),
            2.0,
        )?,
    ])
}

/// Steps `φ₀` and `ψ₀ = φ₀ + lift·(1 + cos 2πy₁)/2 ≥ φ₀` with explicit Euler
/// under a common monotone step and counts nodes where the order breaks,
/// with no tolerance. Returns `(violations, min(ψ − φ))`.
pub fn ordered_pair_violations(
    problem: &FlowProblem,
    lift: f64,
    steps: usize,
    config: &SolverConfig,
) -> Result<(usize, f64), ScenarioError> {
    let g = *problem.grid();
    let upper = problem.phi0.add(&ScalarField::from_fn(g, |x| 0.5 * lift * (1.0 + (2.0 * PI * x[1]).cos())));
    let mut hi_problem = problem.clone();
    hi_problem.phi0 = upper;
    hi_problem.validate(config.tol_psh)?;
    let (ctx_lo, ctx_hi) = (RhsContext::new(problem, config), RhsContext::new(&hi_problem, config));
    let mut lo = problem.phi0.values().to_vec();
    let mut hi = hi_problem.phi0.values().to_vec();
    let (mut next_lo, mut next_hi) = (vec![0.0; lo.len()], vec![0.0; lo.len()]);
    let (mut violations, mut min_sep, mut t) = (0usize, f64::INFINITY, 0.0);
    for _ in 0..steps {
        let s_lo = ctx_lo.eval(&lo, t, &mut next_lo);
        let s_hi = ctx_hi.eval(&hi, t, &mut next_hi);
        let dt = step_size(problem, config, &s_lo).min(step_size(&hi_problem, config, &s_hi)).min(problem.horizon - t);
        if dt <= 0.0 {
            break;
        }
        ExplicitEuler.advance(&ctx_lo, &lo, t, &mut |_| StepSize::plain(dt), &mut next_lo)?;
        ExplicitEuler.advance(&ctx_hi, &hi, t, &mut |_| StepSize::plain(dt), &mut next_hi)?;
        std::mem::swap(&mut lo, &mut next_lo);
        std::mem::swap(&mut hi, &mut next_hi);
        t += dt;
        for (a, b) in lo.iter().zip(&hi) {
            if a > b {
                violations += 1;
            }
            min_sep = min_sep.min(b - a);
        }
    }
    Ok((violations, min_sep))
}

/// Solver runs, barrier self-certification and comparison gaps on the
/// catalog.
#[derive(Clone, Debug)]
pub struct ComparisonSuite {
    pub m: usize,
    /// Closeness of the barriers to the datum at `t = 0`.
    pub eps: f64,
    pub pair_lift: f64,
    pub pair_steps: usize,
    /// Restrict to these catalog ids (all when empty).
    pub only: Vec<String>,
    pub config: SolverConfig,
}

pub fn scenario_comparison_suite(resolution: usize) -> ComparisonSuite {
    ComparisonSuite {
        m: resolution,
        eps: 0.01,
        pair_lift: 0.01,
        pair_steps: 200,
        only: Vec::new(),
        config: SolverConfig::default(),
    }
}

/// Outcome for one catalog problem.
#[derive(Clone, Debug)]
pub struct CatalogOutcome {
    pub checks: Vec<Check>,
    pub row: Vec<String>,
    pub certificates: Vec<crate::verify::CertificateReport>,
}

impl ComparisonSuite {
    pub fn run_problem(&self, cp: &CatalogProblem) -> Result<CatalogOutcome, ScenarioError> {
        let p = &cp.problem;
        let g = *p.grid();
        let h = g.h_max();
        let mut times = vec![0.0];
        times.extend(check_times(p.horizon));
        let cfg = self.config.clone().with_snapshots(times[1..].to_vec());
        let run = solve_detailed(p, &cfg)?;
        let traj = &run.trajectory;
        let tol_b = 10.0 * (h * h + run.dt_max);
        let tol_gap = tol_b * p.horizon;

        let sub =
            build_subbarrier(p, self.eps, &SubbarrierOptions { tol: Some(tol_b), ..Default::default() }, &self.config)?;
        let sup = build_superbarrier(p, self.eps, Some(tol_b), &self.config)?;
        let super_gap = comparison_gap(traj, &sup.field.sample(&traj.times))?;
        let sub_gap = comparison_gap(&sub.field.sample(&traj.times), traj)?;
        let (violations, min_sep) = ordered_pair_violations(p, self.pair_lift, self.pair_steps, &self.config)?;

        let key = |s: &str| format!("{}:{s}", cp.id);
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let checks = vec![
            Check::at_most(key("super_gap"), super_gap, tol_gap),
            Check::at_most(key("sub_gap"), sub_gap, tol_gap),
            Check::at_least(key("subbarrier_residual"), sub.report.worst_residual, -tol_b),
            Check::at_most(key("superbarrier_residual"), sup.report.worst_residual, tol_b),
            Check::at_least(key("subbarrier_closeness"), flag(sub.below_datum && sub.within_eps), 1.0),
            Check::at_least(key("superbarrier_closeness"), flag(sup.above_datum && sup.within_eps), 1.0),
            Check::at_most(key("ordered_pair_violations"), violations as f64, 0.0),
        ];
        let row = vec![
            cp.id.to_string(),
            fmt9(p.horizon),
            fmt9(run.dt_max),
            fmt9(tol_gap),
            fmt9(super_gap),
            fmt9(sub_gap),
            fmt9(sub.c),
            fmt9(sup.c),
            violations.to_string(),
            fmt9(min_sep),
        ];
        Ok(CatalogOutcome { checks, row, certificates: vec![sub.report, sup.report] })
    }
}

impl Scenario for ComparisonSuite {
    fn name(&self) -> &'static str {
        "comparison_suite"
    }

    fn run(&self) -> Result<ScenarioReport, ScenarioError> {
        let mut report = ScenarioReport::new(self.name(), digest_of(self));
        let problems: Vec<CatalogProblem> = catalog(self.m)?
            .into_iter()
            .filter(|c| self.only.is_empty() || self.only.iter().any(|o| o == c.id))
            .collect();
        let outcomes: Vec<CatalogOutcome> =
            problems.par_iter().map(|cp| self.run_problem(cp)).collect::<Result<_, _>>()?;
        let mut table = Table::new(&[
            "problem",
            "horizon",
            "dt_max",
            "tol",
            "super_gap",
            "sub_gap",
            "sub_c",
            "super_c",
            "pair_violations",
            "pair_min_sep",
        ]);
        let mut certs = Vec::new();
        for o in outcomes {
            report.checks.extend(o.checks);
            table.push(o.row);
            certs.extend(o.certificates);
        }
        report.series.push(("catalog".into(), table));
        report.series.push(("certificates".into(), report_table(&certs)));
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_five_problems_with_expected_monotonicity() {
        use crate::background::Monotonicity;
        let c = catalog(16).unwrap();
        assert_eq!(c.len(), 5);
        let mono: Vec<Monotonicity> = c.iter().map(|p| p.problem.family.monotonicity).collect();
        assert_eq!(mono[2], Monotonicity::Constant);
        assert_eq!(mono[3], Monotonicity::NonDecreasing);
        assert_eq!(mono[4], Monotonicity::Neither);
    }

    #[test]
    fn coarse_suite_passes() {
        let r = scenario_comparison_suite(32).run().unwrap();
        assert!(r.passed(), "{:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        assert_eq!(r.checks.len(), 35);
    }
}
