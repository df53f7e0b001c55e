//! One-step update rules sharing the clipped right-hand side from `ma_ops`.

use super::ParabolicError;
use crate::elliptic::newton::{exp_form_step, newton_solve, Equation, NewtonOptions};
use crate::ma_ops::{RhsContext, RhsStats};

/// Step length `dt` and the multiplier `weight` of the rhs (`dt/h(t)` for
/// twisted flows, `dt` otherwise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSize {
    pub dt: f64,
    pub weight: f64,
}

impl StepSize {
    pub fn plain(dt: f64) -> Self {
        StepSize { dt, weight: dt }
    }
}

/// Advances `φ` from `t` to `t + dt`.
///
/// `choose` sees the rhs statistics at `(φ, t)` and returns the step, so the
/// step can depend on the current smallest eigenvalue. The returned stats
/// are those of the rhs at `(φ, t)`.
pub trait Stepper: Send + Sync {
    fn name(&self) -> &'static str;

    fn advance(
        &self,
        ctx: &RhsContext<'_>,
        phi: &[f64],
        t: f64,
        choose: &mut dyn FnMut(&RhsStats) -> StepSize,
        out: &mut [f64],
    ) -> Result<RhsStats, ParabolicError>;
}

/// `φ' = φ + w·rhs(φ, t)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExplicitEuler;

impl Stepper for ExplicitEuler {
    fn name(&self) -> &'static str {
        "explicit_euler"
    }

    fn advance(
        &self,
        ctx: &RhsContext<'_>,
        phi: &[f64],
        t: f64,
        choose: &mut dyn FnMut(&RhsStats) -> StepSize,
        out: &mut [f64],
    ) -> Result<RhsStats, ParabolicError> {
        let stats = ctx.eval(phi, t, out);
        let w = choose(&stats).weight;
        for (o, &p) in out.iter_mut().zip(phi) {
            *o = p + w * *o;
        }
        Ok(stats)
    }
}

/// `φ' − w·rhs(φ', t + dt) = φ`, solved by Newton-Krylov to `tol`.
///
/// The map `φ ↦ φ'` is monotone for n = 1 at every step size, so the
/// discrete comparison principle holds without the `h²·m_min` restriction;
/// this is what makes densities vanishing at nodes tractable.
#[derive(Clone, Copy, Debug)]
pub struct BackwardEuler {
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for BackwardEuler {
    fn default() -> Self {
        BackwardEuler { tol: 1e-10, max_newton: 60 }
    }
}

impl Stepper for BackwardEuler {
    fn name(&self) -> &'static str {
        "backward_euler"
    }

    fn advance(
        &self,
        ctx: &RhsContext<'_>,
        phi: &[f64],
        t: f64,
        choose: &mut dyn FnMut(&RhsStats) -> StepSize,
        out: &mut [f64],
    ) -> Result<RhsStats, ParabolicError> {
        let stats = ctx.eval(phi, t, out);
        if stats.bad_node.is_some() {
            return Ok(stats);
        }
        let step = choose(&stats);
        let res = self.implicit(ctx, phi, t, step, 0)?;
        out.copy_from_slice(&res);
        Ok(stats)
    }
}

impl BackwardEuler {
    /// Halvings tried before an implicit step is reported as failed.
    const MAX_SPLIT: u32 = 8;

    /// One implicit step; when Newton stalls the step is replaced by two
    /// half steps.
    fn implicit(
        &self,
        ctx: &RhsContext<'_>,
        phi: &[f64],
        t: f64,
        step: StepSize,
        depth: u32,
    ) -> Result<Vec<f64>, ParabolicError> {
        if let Some(p) = exp_form_step(ctx, phi, t + step.dt, step.weight, self.tol, self.max_newton) {
            // Equivalent to the clipped equation when no determinant floor
            // binds; for n = 1 the smallest eigenvalue is the determinant.
            if ctx.eval(&p, t + step.dt, &mut vec![0.0; p.len()]).min_eig > ctx.det_floor {
                return Ok(p);
            }
        }
        let eq = Equation { ctx, t: t + step.dt, beta: 1.0 / step.weight, anchor: Some(phi), gauge: None };
        let opts = NewtonOptions { tol: self.tol, max_iter: self.max_newton, krylov_max: 400 };
        let res = newton_solve(&eq, phi.to_vec(), &opts);
        // `weight·residual` is the defect in units of φ. Where μ = 0 the
        // iterate sits near det = 0 and log det carries roundoff well above
        // `tol`, so small steps are accepted on the defect.
        if res.converged || res.residual * step.weight.min(1.0) <= self.tol {
            return Ok(res.phi);
        }
        if depth >= Self::MAX_SPLIT {
            return Err(ParabolicError::Implicit { t, residual: res.residual });
        }
        let half = StepSize { dt: 0.5 * step.dt, weight: 0.5 * step.weight };
        let mid = self.implicit(ctx, phi, t, half, depth + 1)?;
        self.implicit(ctx, &mid, t + half.dt, half, depth + 1)
    }
}

pub fn stepper_names() -> &'static [&'static str] {
    &["explicit_euler", "backward_euler"]
}

pub fn stepper_by_name(name: &str) -> Option<Box<dyn Stepper>> {
    match name {
        "explicit_euler" => Some(Box::new(ExplicitEuler)),
        "backward_euler" => Some(Box::new(BackwardEuler::default())),
        _ => None,
    }
}
