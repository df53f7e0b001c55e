//! Certificates: discrete sub/supersolution residuals, comparison gaps and
//! the explicit barrier constructions.
//!
//! A residual at `(t, x)` is `det_+(ω_t + dd^c u) − e^{∂_t u + F(t,x,u)} μ(t,x)`.
//! Subsolutions need it `≥ −tol`, supersolutions `≤ tol`.

mod barriers;
mod field;

pub use barriers::{
    bounded_envelopes, build_subbarrier, build_superbarrier, ke_lower_barrier, ke_upper_barrier, sandwich_excess,
    Envelopes, SubBarrier, SubbarrierOptions, SuperBarrier, SuperVariant,
};
pub use field::{BarrierField, FieldSlice, Profile, SampledTrajectory, SpaceTime};

use crate::background::sample_times;
use crate::elliptic::StaticError;
use crate::grid::{GridError, Trajectory};
use crate::parabolic::{FlowProblem, ProblemError};
use crate::report::{fmt9, Table};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("trajectories do not match: {0}")]
    Mismatch(String),
    #[error("eta must lie in (0, 1) with eta*sup(phi0 - w0) <= eps, got eta={eta}")]
    Eta { eta: f64 },
    #[error("eps must be finite and >= 0, got {0}")]
    Eps(f64),
    #[error("bandwidth search failed: phi0 too rough at this resolution (last bandwidth {bandwidth:e}, deviation {deviation:e})")]
    Bandwidth { bandwidth: f64, deviation: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Static(#[from] StaticError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateKind {
    Subsolution,
    Supersolution,
}

impl CertificateKind {
    pub fn label(&self) -> &'static str {
        match self {
            CertificateKind::Subsolution => "subsolution",
            CertificateKind::Supersolution => "supersolution",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub problem_id: String,
    pub kind: CertificateKind,
    /// Minimum residual for subsolutions, maximum for supersolutions.
    pub worst_residual: f64,
    pub worst_node: usize,
    pub worst_time: f64,
    pub tol: f64,
    pub pass: bool,
    /// Nodes skipped through the exclusion mask.
    pub excluded: usize,
}

impl CertificateReport {
    pub const HEADER: [&'static str; 7] = ["problem", "kind", "worst_residual", "node", "time", "tol", "pass"];

    pub fn row(&self) -> Vec<String> {
        vec![
            self.problem_id.clone(),
            self.kind.label().into(),
            fmt9(self.worst_residual),
            self.worst_node.to_string(),
            fmt9(self.worst_time),
            fmt9(self.tol),
            self.pass.to_string(),
        ]
    }
}

/// CSV table of reports.
pub fn report_table(reports: &[CertificateReport]) -> Table {
    let mut t = Table::new(&CertificateReport::HEADER);
    for r in reports {
        t.push(r.row());
    }
    t
}

/// Default check times: 32 per unit time in `(0, T]`.
pub fn check_times(horizon: f64) -> Vec<f64> {
    sample_times(horizon, 32).into_iter().filter(|&t| t > 0.0).collect()
}

/// Residual field `det_+(ω_t + shift + dd^c u) − e^{∂_t u + F} μ` at one time.
pub fn residual_at(u: &dyn SpaceTime, problem: &FlowProblem, t: f64) -> Vec<f64> {
    let s = u.slice(t);
    let n = problem.n();
    let sl = problem.family.slice(t);
    (0..s.value.len())
        .into_par_iter()
        .map(|i| {
            let m = problem.family.node(&sl, i) + problem.shift + s.hess[i];
            let rhs = (s.dt[i] + problem.forcing.eval(t, i, s.value[i])).exp() * problem.mu.value(t, i);
            m.det_plus(n) - rhs
        })
        .collect()
}

fn check(
    u: &dyn SpaceTime,
    problem: &FlowProblem,
    times: &[f64],
    tol: f64,
    exclude: Option<&[bool]>,
    kind: CertificateKind,
) -> CertificateReport {
    // Sign so that "worst" is always the minimum of `sign·residual`.
    let sign = match kind {
        CertificateKind::Subsolution => 1.0,
        CertificateKind::Supersolution => -1.0,
    };
    let mut worst = (f64::INFINITY, 0usize, 0.0);
    for &t in times {
        let r = residual_at(u, problem, t);
        for (i, v) in r.iter().enumerate() {
            if exclude.is_some_and(|m| m[i]) {
                continue;
            }
            let s = sign * v;
            if s < worst.0 || s.is_nan() {
                worst = (s, i, t);
                if s.is_nan() {
                    break;
                }
            }
        }
    }
    let excluded = exclude.map_or(0, |m| m.iter().filter(|&&b| b).count());
    let pass = worst.0 >= -tol;
    CertificateReport {
        problem_id: problem.id.clone(),
        kind,
        worst_residual: sign * worst.0,
        worst_node: worst.1,
        worst_time: worst.2,
        tol,
        pass,
        excluded,
    }
}

/// `det_+(ω_t + dd^c u) ≥ e^{∂_t u + F} μ − tol` at every checked `(t, x)`.
pub fn check_subsolution(
    u: &dyn SpaceTime,
    problem: &FlowProblem,
    times: &[f64],
    tol: f64,
    exclude: Option<&[bool]>,
) -> CertificateReport {
    check(u, problem, times, tol, exclude, CertificateKind::Subsolution)
}

/// `det_+(ω_t + dd^c v) ≤ e^{∂_t v + F} μ + tol` at every checked `(t, x)`.
pub fn check_supersolution(
    v: &dyn SpaceTime,
    problem: &FlowProblem,
    times: &[f64],
    tol: f64,
    exclude: Option<&[bool]>,
) -> CertificateReport {
    check(v, problem, times, tol, exclude, CertificateKind::Supersolution)
}

/// `max_{t,x}(φ − ψ) − max_x(φ₀ − ψ₀)₊`; the comparison principle says this
/// is `≤ 0`.
pub fn comparison_gap(phi: &Trajectory, psi: &Trajectory) -> Result<f64, VerifyError> {
    if phi.times.len() != psi.times.len() {
        return Err(VerifyError::Mismatch(format!("{} vs {} snapshots", phi.times.len(), psi.times.len())));
    }
    let mut sup = f64::NEG_INFINITY;
    for (k, (a, b)) in phi.snapshots.iter().zip(&psi.snapshots).enumerate() {
        let (ta, tb) = (phi.times[k], psi.times[k]);
        if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs()) {
            return Err(VerifyError::Mismatch(format!("snapshot {k}: t={ta} vs t={tb}")));
        }
        if a.grid() != b.grid() {
            return Err(VerifyError::Mismatch("grids differ".into()));
        }
        let d = a.values().iter().zip(b.values()).fold(f64::NEG_INFINITY, |m, (x, y)| m.max(x - y));
        sup = sup.max(d);
    }
    let (a0, b0) = (&phi.snapshots[0], &psi.snapshots[0]);
    let init = a0.values().iter().zip(b0.values()).fold(0.0f64, |m, (x, y)| m.max(x - y));
    Ok(sup - init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{BackgroundFamily, TimeFn};
    use crate::grid::{ScalarField, TorusGrid, TrajectoryMeta};
    use crate::herm::HermMat;
    use crate::parabolic::{solve, DensitySpec, ForcingSpec, SolverConfig};

    fn flat(alpha: f64) -> FlowProblem {
        let g = TorusGrid::new(1, 16).unwrap();
        let fam = BackgroundFamily::constant(g, HermMat::identity(1), 1.0).unwrap();
        let mu = DensitySpec::positive(ScalarField::constant(g, 1.0), TimeFn::One).unwrap();
        FlowProblem::new("flat", fam, mu, ForcingSpec::linear(alpha), ScalarField::zeros(g), 1.0).unwrap()
    }

    #[test]
    fn stationary_solution_has_zero_residual() {
        let p = flat(0.0);
        let u = BarrierField::constant_in_time("zero", ScalarField::zeros(*p.grid()));
        let times = check_times(1.0);
        let sub = check_subsolution(&u, &p, &times, 1e-10, None);
        let sup = check_supersolution(&u, &p, &times, 1e-10, None);
        assert!(sub.pass && sup.pass);
        assert_eq!(sub.worst_residual, 0.0);
    }

    #[test]
    fn linear_subsolution_with_unit_rate() {
        // u = −t on flat data: residual 1 − e^{−1 + F(u)} ≥ 0 while F ≤ 1.
        let p = flat(0.0);
        let g = *p.grid();
        let u = BarrierField::new("sub", g, vec![], Profile::linear(0.0, -1.0));
        let r = check_subsolution(&u, &p, &check_times(1.0), 0.0, None);
        assert!(r.pass);
        assert!((r.worst_residual - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn inflated_density_breaks_subsolution() {
        let p = flat(0.0);
        let mut q = p.clone();
        q.mu = DensitySpec::positive(ScalarField::constant(*p.grid(), 1.5), TimeFn::One).unwrap();
        let u = BarrierField::constant_in_time("zero", ScalarField::zeros(*p.grid()));
        let r = check_subsolution(&u, &q, &check_times(1.0), 1e-10, None);
        assert!(!r.pass);
        assert!((r.worst_residual + 0.5).abs() < 1e-14);
    }

    #[test]
    fn gap_examples() {
        let p = flat(0.0);
        let traj = solve(&p, &SolverConfig::default().with_snapshots(vec![0.5])).unwrap();
        assert_eq!(comparison_gap(&traj, &traj).unwrap(), 0.0);
        let mut shifted = traj.clone();
        shifted.snapshots = traj.snapshots.iter().map(|s| s.add_scalar(1.0)).collect();
        assert_eq!(comparison_gap(&traj, &shifted).unwrap(), -1.0);
        let short = Trajectory::new(traj.snapshots[0].clone(), TrajectoryMeta::default());
        assert!(comparison_gap(&traj, &short).is_err());
    }
}
