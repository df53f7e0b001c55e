use super::ScenarioError;
use crate::background::{BackgroundFamily, TimeFn};
use crate::elliptic::{solve_static, StaticProblem};
use crate::grid::trig::TrigSeries;
use crate::grid::{sup_norm_diff, ScalarField, TorusGrid};
use crate::herm::HermMat;
use crate::ma_ops::RhsContext;
use crate::parabolic::{solve, step_size, DensitySpec, DtRule, FlowProblem, ForcingSpec, SolverConfig};

/// Recovery of a smooth `φ*` from `μ = det(I + dd^cφ*)·e^{−αφ*}`, built with
/// the exact Hessian so the discrete problem carries an `O(h²)` consistency
/// error.
///
/// Two routes per resolution: the static Newton solve, and an explicit flow
/// started at `φ*` for `flow_steps` steps of one common `dt` (stable on the
/// finest grid). The flow drifts by `≈ flow_steps·dt·τ_h` with `τ_h` the
/// truncation residual at `φ*`.
#[derive(Clone, Debug)]
pub struct ManufacturedStudy {
    pub n: usize,
    pub resolutions: Vec<usize>,
    pub target: TrigSeries,
    pub alpha: f64,
    pub flow_steps: usize,
    pub config: SolverConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    pub h: f64,
    pub static_error: f64,
    pub flow_error: f64,
    /// `log₂` of the error ratio to the previous (coarser) row.
    pub static_order: Option<f64>,
    pub flow_order: Option<f64>,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
}

impl ManufacturedStudy {
    /// `φ* = 0.1cos(2πx₁)`, `α = 1`, `m ∈ {64, 128, 256}`.
    pub fn one_dimensional() -> Self {
        ManufacturedStudy {
            n: 1,
            resolutions: vec![64, 128, 256],
            target: TrigSeries::new().term(0.1, [1, 0, 0, 0], 0.0),
            alpha: 1.0,
            flow_steps: 20,
            config: SolverConfig::default(),
        }
    }

    /// A target coupling both complex directions, `m ∈ {32, 64}`.
    pub fn two_dimensional() -> Self {
        ManufacturedStudy {
            n: 2,
            resolutions: vec![32, 64],
            target: TrigSeries::new().term(0.04, [1, 0, 0, 0], 0.0).term(0.03, [0, 0, 1, 1], 0.3),
            alpha: 1.0,
            flow_steps: 20,
            config: SolverConfig::default(),
        }
    }

    fn problem(&self, m: usize) -> Result<(ScalarField, FlowProblem), ScenarioError> {
        let g = TorusGrid::new(self.n, m)?;
        let star = self.target.sample(g);
        let id = HermMat::identity(self.n);
        let mu: Vec<f64> = self
            .target
            .sample_hessian(g)
            .into_iter()
            .zip(star.values())
            .map(|(h, p)| (id + h).det(self.n) * (-self.alpha * p).exp())
            .collect();
        let mu = DensitySpec::positive(ScalarField::from_values(g, mu)?, TimeFn::One)?;
        let fam = BackgroundFamily::constant(g, id, 1.0)?;
        let p = FlowProblem::new("manufactured", fam, mu, ForcingSpec::linear(self.alpha), star.clone(), 1.0)?;
        Ok((star, p))
    }
}

fn order(prev: Option<&ConvergenceRow>, h: f64, err: f64, pick: fn(&ConvergenceRow) -> f64) -> Option<f64> {
    prev.map(|r| (pick(r) / err).ln() / (r.h / h).ln())
}

pub fn manufactured_convergence(study: &ManufacturedStudy) -> Result<Vec<ConvergenceRow>, ScenarioError> {
    let finest = *study.resolutions.iter().max().ok_or_else(|| ScenarioError::Parameter("no resolutions".into()))?;
    if study.flow_steps == 0 {
        return Err(ScenarioError::Parameter("flow_steps must be positive".into()));
    }
    let dt = {
        let (star, p) = study.problem(finest)?;
        let mut out = vec![0.0; star.len()];
        let stats = RhsContext::new(&p, &study.config).eval(star.values(), 0.0, &mut out);
        step_size(&p, &study.config, &stats)
    };
    let horizon = dt * study.flow_steps as f64;
    let flow_cfg =
        study.config.clone().with_stepper("explicit_euler").with_dt(DtRule::Fixed(dt)).with_snapshots(Vec::new());

    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &m in &study.resolutions {
        let (star, mut p) = study.problem(m)?;
        let h = p.grid().h_max();
        let stat = solve_static(
            &StaticProblem::flat(*p.grid(), HermMat::identity(study.n), p.mu.clone(), study.alpha)?,
            &study.config,
        )?;
        let static_error = sup_norm_diff(&stat.phi, &star)?;
        p.horizon = horizon;
        p.family = BackgroundFamily::constant(*p.grid(), HermMat::identity(study.n), horizon)?;
        let flow_error = sup_norm_diff(solve(&p, &flow_cfg)?.last(), &star)?;
        let prev = rows.last();
        rows.push(ConvergenceRow {
            m,
            h,
            static_error,
            flow_error,
            static_order: order(prev, h, static_error, |r| r.static_error),
            flow_order: order(prev, h, flow_error, |r| r.flow_error),
            newton_iterations: stat.iterations,
            linear_iterations: stat.linear_iterations,
        });
    }
    Ok(rows)
}
