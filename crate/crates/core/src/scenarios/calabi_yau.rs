use super::{digest_of, Check, Scenario, ScenarioError, ScenarioReport};
use crate::background::{BackgroundFamily, TimeFn};
use crate::elliptic::{solve_static, StaticProblem};
use crate::grid::trig::TrigSeries;
use crate::grid::{mean, ScalarField, TorusGrid, Trajectory};
use crate::herm::HermMat;
use crate::parabolic::{solve, DensitySpec, DtRule, FlowProblem, ForcingSpec, SolverConfig};
use crate::report::{fmt9, Table};
use rayon::prelude::*;

/// `(A + dd^cφ)^n = e^{∂_tφ}μ` from `φ₀ = 0` with the manufactured density
/// `μ = det(A + dd^cφ*)`, compared with the normalized static solution, plus
/// the perturbed flows `F = ε(φ − M₀)` and `F = ε(φ − m₀)`.
#[derive(Clone, Debug)]
pub struct CalabiYau {
    pub m: usize,
    pub horizon: f64,
    /// Fixed backward Euler step shared by all member runs.
    pub dt: f64,
    pub class: f64,
    /// Static target `φ*`; empty gives `μ = det A`.
    pub target: TrigSeries,
    pub eps: Vec<f64>,
    pub gap_tol: f64,
    pub config: SolverConfig,
}

pub fn scenario_calabi_yau(resolution: usize, horizon: f64) -> CalabiYau {
    CalabiYau {
        m: resolution,
        horizon,
        dt: 0.05,
        class: 1.0,
        target: TrigSeries::new().term(0.04, [1, 0, 0, 0], 0.0).term(0.02, [0, 1, 0, 0], 0.5),
        eps: vec![0.2, 0.1, 0.05],
        gap_tol: 1e-2,
        config: SolverConfig::default(),
    }
}

fn normalized(s: &ScalarField) -> ScalarField {
    s.add_scalar(-mean(s))
}

/// `max(lo − φ, φ − hi)` over snapshots and nodes.
fn sandwich(lo: &Trajectory, phi: &Trajectory, hi: &Trajectory) -> (f64, f64) {
    let (mut below, mut above) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..phi.snapshots.len() {
        let (l, p, h) = (lo.snapshots[k].values(), phi.snapshots[k].values(), hi.snapshots[k].values());
        for i in 0..p.len() {
            below = below.max(l[i] - p[i]);
            above = above.max(p[i] - h[i]);
        }
    }
    (below, above)
}

impl CalabiYau {
    pub fn density(&self, g: TorusGrid) -> Result<DensitySpec, ScenarioError> {
        let a = HermMat::scalar(1, self.class);
        let vals = self.target.sample_hessian(g).into_iter().map(|h| (a + h).det(1)).collect();
        Ok(DensitySpec::positive(ScalarField::from_values(g, vals)?, TimeFn::One)?)
    }
}

impl Scenario for CalabiYau {
    fn name(&self) -> &'static str {
        "calabi_yau"
    }

    fn run(&self) -> Result<ScenarioReport, ScenarioError> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(ScenarioError::Parameter("dt and horizon must be positive".into()));
        }
        let mut report = ScenarioReport::new(self.name(), digest_of(self));
        let g = TorusGrid::new(1, self.m)?;
        let h = g.h_max();
        let a = HermMat::scalar(1, self.class);
        let mu = self.density(g)?;
        let stat = solve_static(&StaticProblem::flat(g, a, mu.clone(), 0.0)?, &self.config)?;
        let u = stat.phi;

        let fam = BackgroundFamily::constant(g, a, self.horizon)?;
        let phi0 = ScalarField::zeros(g);
        let base = FlowProblem::new("calabi_yau", fam, mu, ForcingSpec::zero(), phi0.clone(), self.horizon)?;
        let snaps: Vec<f64> = (1..).map(|k| k as f64).take_while(|&t| t < self.horizon).collect();
        let cfg =
            self.config.clone().with_stepper("backward_euler").with_dt(DtRule::Fixed(self.dt)).with_snapshots(snaps);

        // ρ = u + max(φ₀ − u) is a stationary solution above φ₀; the
        // comparison principle brackets φ between ρ − max(ρ − φ₀) and ρ.
        let rho = u.add_scalar(phi0.sub(&u).max());
        let big_m = rho.max();
        let small_m = rho.min() - rho.sub(&phi0).max();

        let mut problems = vec![base.clone()];
        for &e in &self.eps {
            for anchor in [big_m, small_m] {
                let mut p = base.clone();
                p.id = format!("calabi_yau_eps{e}_{}", if anchor == big_m { "upper" } else { "lower" });
                p.forcing = ForcingSpec::Linear { alpha: e, anchor, drift: 0.0 };
                problems.push(p);
            }
        }
        let runs: Vec<Trajectory> = problems.par_iter().map(|p| solve(p, &cfg)).collect::<Result<_, _>>()?;
        let phi = &runs[0];

        let un = normalized(&u);
        let mut gap_series = Table::new(&["t", "normalized_gap", "mean"]);
        let mut last_gap = f64::NAN;
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&t, s) in phi.times.iter().zip(&phi.snapshots) {
            last_gap = normalized(s).sub(&un).sup_norm();
            hi = hi.max(s.max());
            lo = lo.min(s.min());
            gap_series.push(vec![fmt9(t), fmt9(last_gap), fmt9(mean(s))]);
        }
        let tol = 10.0 * h * h;
        report.checks.push(Check::at_most(format!("normalized_gap@t={}", fmt9(self.horizon)), last_gap, self.gap_tol));
        report.checks.push(Check::at_most("bounded_above", hi - big_m, tol));
        report.checks.push(Check::at_least("bounded_below", lo - small_m, -tol));

        let mut sand = Table::new(&["eps", "lower_excess", "upper_excess"]);
        for (k, &e) in self.eps.iter().enumerate() {
            let (upper, lower) = (&runs[1 + 2 * k], &runs[2 + 2 * k]);
            let (below, above) = sandwich(lower, phi, upper);
            sand.push(vec![fmt9(e), fmt9(below), fmt9(above)]);
            report.checks.push(Check::at_most(format!("sandwich@eps={}", fmt9(e)), below.max(above), tol));
        }
        report.series.push(("gap".into(), gap_series));
        report.series.push(("sandwich".into(), sand));
        report.snapshots.push(("static".into(), u));
        report.snapshots.push(("phi_final".into(), phi.last().clone()));
        Ok(report)
    }
}
