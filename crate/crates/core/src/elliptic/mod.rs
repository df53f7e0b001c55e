//! Static degenerate complex Monge-Ampère equations
//! `(ω + dd^c φ)^n = e^{αφ + c} μ`, with `c = 0` for `α > 0` and `c` the
//! normalizing constant (and `mean φ = 0`) for `α = 0`.

mod krylov;
pub(crate) mod newton;

use crate::background::{BackgroundError, BackgroundFamily, TimeFn};
use crate::grid::{mean, sup_norm_diff, HermitianField, ScalarField, TorusGrid};
use crate::ma_ops::RhsContext;
use crate::parabolic::{
    solve_detailed, DensitySpec, FlowProblem, ForcingSpec, ParabolicError, ProblemError, SolverConfig, Stepper,
};
use crate::parabolic::{DtRule, ExplicitEuler, StepSize};
use newton::{newton_solve, Equation, NewtonOptions};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StaticError {
    #[error("static solve did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("alpha = 0 needs mean(mu) = mean(det omega) within 1%, ratio is {ratio}")]
    Mass { ratio: f64 },
    #[error("alpha must be finite and >= 0, got {0}")]
    Alpha(f64),
    #[error("static density must not depend on time")]
    TimeDependent,
    #[error("unknown static strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
}

/// `(ω + dd^c φ)^n = e^{αφ} μ` on a fixed background.
#[derive(Clone, Debug)]
pub struct StaticProblem {
    pub omega: HermitianField,
    pub mu: DensitySpec,
    pub alpha: f64,
}

impl StaticProblem {
    pub fn new(omega: HermitianField, mu: DensitySpec, alpha: f64) -> Result<Self, StaticError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(StaticError::Alpha(alpha));
        }
        if mu.is_time_dependent() {
            return Err(StaticError::TimeDependent);
        }
        if omega.grid() != mu.grid() {
            return Err(ProblemError::GridMismatch.into());
        }
        let p = StaticProblem { omega, mu, alpha };
        if alpha == 0.0 {
            let ratio = p.mass_ratio();
            if (ratio - 1.0).abs() > 0.01 {
                return Err(StaticError::Mass { ratio });
            }
        }
        Ok(p)
    }

    /// Constant background `A`.
    pub fn flat(grid: TorusGrid, a: crate::herm::HermMat, mu: DensitySpec, alpha: f64) -> Result<Self, StaticError> {
        Self::new(HermitianField::constant(grid, a), mu, alpha)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.omega.grid()
    }

    /// `mean(μ) / mean(det ω)`.
    pub fn mass_ratio(&self) -> f64 {
        let n = self.grid().n();
        let det: f64 = self.omega.mats().iter().map(|m| m.det(n)).sum::<f64>() / self.omega.mats().len() as f64;
        mean(&self.mu.at(0.0)) / det
    }

    /// The flow whose stationary points solve this problem.
    pub fn flow_problem(&self, phi0: ScalarField, horizon: f64) -> Result<FlowProblem, StaticError> {
        let family = BackgroundFamily::from_static_field(&self.omega, horizon)?;
        Ok(FlowProblem {
            id: "static".into(),
            family,
            shift: crate::herm::HermMat::ZERO,
            mu: self.mu.with_time(TimeFn::One),
            forcing: ForcingSpec::linear(self.alpha),
            phi0,
            horizon,
        })
    }
}

#[derive(Clone, Debug)]
pub struct StaticSolution {
    pub phi: ScalarField,
    /// `sup |log det_+(ω + dd^cφ) − log μ − αφ − c|`.
    pub residual: f64,
    /// Normalizing constant `c` (0 for `α > 0`).
    pub constant: f64,
    pub iterations: usize,
    /// Krylov iterations summed over Newton steps (0 for the flow strategy).
    pub linear_iterations: usize,
    pub strategy: &'static str,
}

/// A way of producing static solutions.
pub trait StaticSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(
        &self,
        p: &StaticProblem,
        init: &ScalarField,
        config: &SolverConfig,
    ) -> Result<StaticSolution, StaticError>;
}

/// Pseudo-time explicit Euler on the flow until `sup |rhs − c| ≤ tol`.
/// For `α = 0` the mean is projected out after every step.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlowToStationarity;

impl StaticSolver for FlowToStationarity {
    fn name(&self) -> &'static str {
        "flow"
    }

    fn solve(
        &self,
        p: &StaticProblem,
        init: &ScalarField,
        config: &SolverConfig,
    ) -> Result<StaticSolution, StaticError> {
        let fp = p.flow_problem(init.clone(), 1.0)?;
        let ctx = RhsContext::new(&fp, config);
        let g = *p.grid();
        let weight = g.center_weight();
        let m_floor = config.det_floor.powf(1.0 / g.n() as f64);
        let c_rule = match config.dt_rule {
            DtRule::Cfl { c } => Some(c),
            DtRule::Fixed(_) => None,
        };
        let gauge = p.alpha == 0.0;
        let mut phi = init.values().to_vec();
        if gauge {
            let m = phi.iter().sum::<f64>() / phi.len() as f64;
            phi.iter_mut().for_each(|v| *v -= m);
        }
        let mut next = vec![0.0; phi.len()];
        let (mut residual, mut constant) = (f64::INFINITY, 0.0);
        for it in 0..=config.max_steps {
            let mut done = false;
            let choose = |s: &crate::ma_ops::RhsStats| match (c_rule, config.dt_rule) {
                (Some(c), _) => c / (weight / s.min_eig.max(m_floor) + p.alpha),
                (_, DtRule::Fixed(d)) => d,
                _ => unreachable!(),
            };
            // Residual check on the rhs at the current iterate.
            let stats = ctx.eval(&phi, 0.0, &mut next);
            if let Some(node) = stats.bad_node {
                return Err(ParabolicError::NonFinite { t: 0.0, node }.into());
            }
            let (lo, hi) = next.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
            if gauge {
                constant = 0.5 * (lo + hi);
                residual = 0.5 * (hi - lo);
            } else {
                residual = stats.max_abs;
            }
            if residual <= config.stationarity_tol {
                done = true;
            }
            if done || it == config.max_steps {
                if !done {
                    return Err(StaticError::NotConverged { iterations: it, residual });
                }
                return Ok(StaticSolution {
                    phi: ScalarField::from_values(g, phi).map_err(ProblemError::from)?,
                    residual,
                    constant,
                    iterations: it,
                    linear_iterations: 0,
                    strategy: "flow",
                });
            }
            ExplicitEuler.advance(&ctx, &phi, 0.0, &mut |s| StepSize::plain(choose(s)), &mut next)?;
            std::mem::swap(&mut phi, &mut next);
            if gauge {
                let m = phi.iter().sum::<f64>() / phi.len() as f64;
                phi.iter_mut().for_each(|v| *v -= m);
            }
        }
        Err(StaticError::NotConverged { iterations: config.max_steps, residual })
    }
}

/// Newton's method with a preconditioned BiCGSTAB inner solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct NewtonKrylov;

impl StaticSolver for NewtonKrylov {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn solve(
        &self,
        p: &StaticProblem,
        init: &ScalarField,
        config: &SolverConfig,
    ) -> Result<StaticSolution, StaticError> {
        let fp = p.flow_problem(init.clone(), 1.0)?;
        let ctx = RhsContext::new(&fp, config);
        let eq = Equation { ctx: &ctx, t: 0.0, beta: 0.0, anchor: None, gauge: (p.alpha == 0.0).then_some(0.0) };
        let opts = NewtonOptions { tol: config.stationarity_tol, max_iter: config.max_steps.min(200), krylov_max: 400 };
        let out = newton_solve(&eq, init.values().to_vec(), &opts);
        if !out.converged {
            return Err(StaticError::NotConverged { iterations: out.iterations, residual: out.residual });
        }
        let mut phi = out.phi;
        if p.alpha == 0.0 {
            let m = phi.iter().sum::<f64>() / phi.len() as f64;
            phi.iter_mut().for_each(|v| *v -= m);
        }
        Ok(StaticSolution {
            phi: ScalarField::from_values(*p.grid(), phi).map_err(ProblemError::from)?,
            residual: out.residual,
            constant: out.constant,
            iterations: out.iterations,
            linear_iterations: out.krylov_iterations,
            strategy: "newton",
        })
    }
}

pub fn static_strategy_names() -> &'static [&'static str] {
    &["newton", "flow"]
}

pub fn static_solver_by_name(name: &str) -> Option<Box<dyn StaticSolver>> {
    match name {
        "newton" => Some(Box::new(NewtonKrylov)),
        "flow" => Some(Box::new(FlowToStationarity)),
        _ => None,
    }
}

/// Solves from the zero initial guess with `config.static_strategy`.
pub fn solve_static(p: &StaticProblem, config: &SolverConfig) -> Result<StaticSolution, StaticError> {
    solve_static_from(p, &ScalarField::zeros(*p.grid()), config)
}

pub fn solve_static_from(
    p: &StaticProblem,
    init: &ScalarField,
    config: &SolverConfig,
) -> Result<StaticSolution, StaticError> {
    let solver = static_solver_by_name(&config.static_strategy)
        .ok_or_else(|| StaticError::UnknownStrategy(config.static_strategy.clone()))?;
    solver.solve(p, init, config)
}

/// One row of the contraction series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionRow {
    pub t: f64,
    pub gap: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
    /// `10·(h² + dt)` with the largest step taken.
    pub tol: f64,
    /// Times where `gap > bound + tol`.
    pub violations: Vec<f64>,
}

/// Runs the `α = 1` flow from `phi0` and compares `‖φ_t − φ_KE‖_∞` with
/// `e^{−t}‖φ₀ − φ_KE‖_∞`.
pub fn ke_contraction_check(
    p: &StaticProblem,
    phi_ke: &ScalarField,
    phi0: &ScalarField,
    horizon: f64,
    config: &SolverConfig,
) -> Result<ContractionReport, StaticError> {
    if p.alpha != 1.0 {
        return Err(StaticError::Alpha(p.alpha));
    }
    let mut fp = p.flow_problem(phi0.clone(), horizon)?;
    fp.id = "ke_contraction".into();
    let report = solve_detailed(&fp, config)?;
    let h = p.grid().h_max();
    let tol = 10.0 * (h * h + report.dt_max);
    let gap0 = sup_norm_diff(phi0, phi_ke).map_err(ProblemError::from)?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (&t, s) in report.trajectory.times.iter().zip(&report.trajectory.snapshots) {
        let gap = sup_norm_diff(s, phi_ke).map_err(ProblemError::from)?;
        let bound = (-t).exp() * gap0;
        if gap > bound + tol {
            violations.push(t);
        }
        rows.push(ContractionRow { t, gap, bound });
    }
    Ok(ContractionReport { rows, tol, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herm::HermMat;
    use std::f64::consts::PI;

    fn manufactured(m: usize, alpha: f64) -> (StaticProblem, ScalarField) {
        let g = TorusGrid::new(1, m).unwrap();
        let star = ScalarField::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let mu = ScalarField::from_fn(g, |x| {
            let c = (2.0 * PI * x[0]).cos();
            (1.0 - 0.1 * PI * PI * c) * (-alpha * 0.1 * c).exp()
        });
        let mu = DensitySpec::positive(mu, TimeFn::One).unwrap();
        (StaticProblem::flat(g, HermMat::identity(1), mu, alpha).unwrap(), star)
    }

    #[test]
    fn flat_solution_is_zero() {
        let g = TorusGrid::new(1, 16).unwrap();
        let mu = DensitySpec::positive(ScalarField::constant(g, 1.0), TimeFn::One).unwrap();
        let p = StaticProblem::flat(g, HermMat::identity(1), mu, 1.0).unwrap();
        let s = solve_static(&p, &SolverConfig::default()).unwrap();
        assert!(s.phi.sup_norm() < 1e-12);
    }

    #[test]
    fn newton_recovers_manufactured_alpha_one() {
        let (p, star) = manufactured(128, 1.0);
        let s = solve_static(&p, &SolverConfig::default()).unwrap();
        assert!(s.residual <= 1e-6);
        assert!(sup_norm_diff(&s.phi, &star).unwrap() < 5e-3);
    }

    #[test]
    fn newton_recovers_manufactured_alpha_zero() {
        let (p, star) = manufactured(128, 0.0);
        let s = solve_static(&p, &SolverConfig::default()).unwrap();
        assert!(mean(&s.phi).abs() < 1e-12);
        assert!(sup_norm_diff(&s.phi, &star).unwrap() < 5e-3);
    }

    #[test]
    fn flow_strategy_agrees_with_newton() {
        let (p, _) = manufactured(32, 1.0);
        let mut cfg = SolverConfig::default();
        cfg.stationarity_tol = 1e-8;
        let a = solve_static(&p, &cfg).unwrap();
        cfg.static_strategy = "flow".into();
        let b = solve_static(&p, &cfg).unwrap();
        assert!(sup_norm_diff(&a.phi, &b.phi).unwrap() < 1e-7);
    }

    #[test]
    fn mass_mismatch_and_budget() {
        let g = TorusGrid::new(1, 16).unwrap();
        let mu = DensitySpec::positive(ScalarField::constant(g, 2.0), TimeFn::One).unwrap();
        assert!(matches!(StaticProblem::flat(g, HermMat::identity(1), mu, 0.0), Err(StaticError::Mass { .. })));
        let (p, _) = manufactured(32, 1.0);
        let mut cfg = SolverConfig::default();
        cfg.max_steps = 1;
        cfg.static_strategy = "flow".into();
        assert!(matches!(solve_static(&p, &cfg), Err(StaticError::NotConverged { .. })));
    }
}
