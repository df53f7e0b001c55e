//! Explicit barriers: the bounded envelopes `−C₁t + ρ₁`, `C₂t + ρ₂`, the
//! ε-sub/superbarriers at the initial time, and the sub/supersolutions of
//! the long-time convergence argument.
//!
//! Every construction uses discrete ingredients (discrete static solves,
//! discrete Hessians), so the constants it picks make the discrete
//! inequality hold on the construction time grid.

use super::field::{BarrierField, Profile, SpaceTime};
use super::{check_subsolution, check_supersolution, check_times, residual_at, CertificateReport, VerifyError};
use crate::background::Monotonicity;
use crate::background::TimeFn;
use crate::elliptic::{solve_static_from, StaticProblem};
use crate::grid::{complex_hessian, mollify, HermitianField, ScalarField, TorusGrid, Trajectory};
use crate::parabolic::{
    h2_derivative, h2_profile, h_derivative, h_profile, DensityKind, DensitySpec, FlowProblem, SolverConfig,
};

fn construction_times(horizon: f64) -> Vec<f64> {
    let mut ts = vec![0.0];
    ts.extend(check_times(horizon));
    ts
}

fn default_tol(g: &TorusGrid) -> f64 {
    let h = g.h_max();
    10.0 * h * h
}

/// Constants of the bounded envelopes `−C₁t + ρ₁ ≤ φ ≤ C₂t + ρ₂`.
///
/// On the flat model `θ` and `Θ` are constant forms, so the potentials
/// `ρ₁`, `ρ₂` solving `(θ + dd^cρ₁)^n = c₁`, `(Θ + dd^cρ₂)^n = c₂ f₀` with
/// constant `f₀ = inf μ` are constants, normalized to `min φ₀` and `max φ₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelopes {
    pub c1: f64,
    pub rho1: f64,
    pub c2: f64,
    pub rho2: f64,
}

impl Envelopes {
    pub fn lower(&self, g: TorusGrid) -> BarrierField {
        BarrierField::new("lower_envelope", g, vec![], Profile::linear(self.rho1, -self.c1))
    }

    pub fn upper(&self, g: TorusGrid) -> BarrierField {
        BarrierField::new("upper_envelope", g, vec![], Profile::linear(self.rho2, self.c2))
    }
}

/// `C₁ = max(0, sup[log μ + F(·, ρ₁)] − log det θ)` and
/// `C₂ = max(0, sup[log det Θ − log μ − F(·, ρ₂)])` over the sampled
/// `(t, x)` with `μ > 0`.
pub fn bounded_envelopes(problem: &FlowProblem) -> Result<Envelopes, VerifyError> {
    let n = problem.n();
    let theta = problem.family.theta + problem.shift;
    let big = problem.family.big_theta + problem.shift;
    let det_theta = theta.det_plus(n);
    if det_theta <= 0.0 {
        return Err(VerifyError::Unsupported("lower envelope needs det theta > 0".into()));
    }
    let ln_theta = det_theta.ln();
    let ln_big = big.det_plus(n).ln();
    let rho1 = problem.phi0.min();
    let rho2 = problem.phi0.max();
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for t in construction_times(problem.horizon) {
        for i in 0..problem.grid().len() {
            let mu = problem.mu.value(t, i);
            if mu <= 0.0 {
                continue;
            }
            c1 = c1.max(mu.ln() + problem.forcing.eval(t, i, rho1) - ln_theta);
            c2 = c2.max(ln_big - mu.ln() - problem.forcing.eval(t, i, rho2));
        }
    }
    Ok(Envelopes { c1, rho1, c2, rho2 })
}

/// `max(lower − φ, φ − upper)` over snapshots and nodes; `≤ 0` means the
/// trajectory stays between the envelopes.
pub fn sandwich_excess(traj: &Trajectory, env: &Envelopes) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (&t, s) in traj.times.iter().zip(&traj.snapshots) {
        let lo = env.rho1 - env.c1 * t;
        let hi = env.rho2 + env.c2 * t;
        for &v in s.values() {
            worst = worst.max(lo - v).max(v - hi);
        }
    }
    worst
}

/// Options for [`build_subbarrier`].
#[derive(Clone, Debug, Default)]
pub struct SubbarrierOptions {
    /// Defaults to `min(1/2, ε / sup(φ₀ − w₀))`.
    pub eta: Option<f64>,
    /// Supplied `w₀` with `(θ + dd^c w₀)^n ≥ e^{w₀}μ`; solved for otherwise.
    pub w0: Option<ScalarField>,
    /// Defaults to `10·h²`.
    pub tol: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SubBarrier {
    pub field: BarrierField,
    pub eps: f64,
    pub eta: f64,
    pub w0: ScalarField,
    /// Constant in front of `−t`; the larger of `c_tight` and `c_closed_form`.
    pub c: f64,
    /// Smallest constant making the discrete inequality hold on the
    /// construction times.
    pub c_tight: f64,
    /// `max(−n log η − w₀) + sup F⁺`, available for non-decreasing families.
    pub c_closed_form: Option<f64>,
    /// `sup_t ε(t)` of the very-regular correction (0 for non-decreasing families).
    pub eps_t_max: f64,
    pub report: CertificateReport,
    /// `u(0,·) ≤ φ₀` at every node.
    pub below_datum: bool,
    /// `u(0,·) ≥ φ₀ − ε` at every node.
    pub within_eps: bool,
}

impl SubBarrier {
    pub fn passes(&self) -> bool {
        self.report.pass && self.below_datum && self.within_eps
    }
}

/// Upper envelope in time of `μ`, lifted to stay positive.
fn density_majorant(problem: &FlowProblem, times: &[f64]) -> ScalarField {
    let g = *problem.grid();
    let mut m = vec![0.0f64; g.len()];
    for &t in times {
        for (i, v) in m.iter_mut().enumerate() {
            *v = v.max(problem.mu.value(t, i));
        }
    }
    let top = m.iter().cloned().fold(0.0, f64::max);
    m.iter_mut().for_each(|v| *v += 1e-3 * top);
    ScalarField::from_raw(g, m)
}

/// `ε(t)` with a centered-difference derivative.
fn eps_profile(problem: &FlowProblem) -> Profile {
    let fam = problem.family.clone();
    let horizon = fam.horizon;
    Profile::new("eps(t)", move |t| {
        let d = 1e-6;
        let (a, b) = ((t - d).max(0.0), (t + d).min(horizon));
        (fam.epsilon_at(t), (fam.epsilon_at(b) - fam.epsilon_at(a)) / (b - a))
    })
}

/// `u = φ₀ + η(w₀ − φ₀) − ε(t)φ₀ − Ct`, the ε-subbarrier at every initial
/// point. `ε(t)` is the very-regular correction and vanishes for
/// non-decreasing families.
pub fn build_subbarrier(
    problem: &FlowProblem,
    eps: f64,
    opts: &SubbarrierOptions,
    config: &SolverConfig,
) -> Result<SubBarrier, VerifyError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(VerifyError::Eps(eps));
    }
    let g = *problem.grid();
    let n = problem.n();
    let phi0 = &problem.phi0;
    let times = construction_times(problem.horizon);
    let w0 = match &opts.w0 {
        Some(w) => w.clone(),
        None => {
            let theta = problem.family.theta + problem.shift;
            if theta.det_plus(n) <= 0.0 {
                return Err(VerifyError::Unsupported("subbarrier needs det theta > 0".into()));
            }
            let mu = DensitySpec::positive(density_majorant(problem, &times), TimeFn::One)?;
            let sp = StaticProblem::new(HermitianField::constant(g, theta), mu, 1.0)?;
            let init = ScalarField::constant(g, (theta.det_plus(n) / problem.mu.at(0.0).max()).ln());
            solve_static_from(&sp, &init, config)?.phi
        }
    };
    let over = w0.values().iter().zip(phi0.values()).fold(0.0f64, |m, (w, p)| m.max(w - p));
    let w0 = if over > 0.0 { w0.add_scalar(-over) } else { w0 };
    let sup_d = phi0.values().iter().zip(w0.values()).fold(0.0f64, |m, (p, w)| m.max(p - w));
    let eta = match opts.eta {
        Some(e) => e,
        None if sup_d == 0.0 => 0.5,
        None => (0.5f64).min(eps / sup_d * (1.0 - 1e-9)),
    };
    if !(eta > 0.0 && eta < 1.0) || eta * sup_d > eps {
        return Err(VerifyError::Eta { eta });
    }

    let monotone = matches!(problem.family.monotonicity, Monotonicity::Constant | Monotonicity::NonDecreasing);
    let eps_t_max =
        if monotone { 0.0 } else { times.iter().map(|&t| problem.family.epsilon_at(t)).fold(0.0, f64::max) };
    if eps_t_max > 1.0 - eta {
        return Err(VerifyError::Unsupported(format!(
            "family is not very regular for eta={eta}: sup eps(t) = {eps_t_max}"
        )));
    }

    // u(0,·) = φ₀ + η(w₀ − φ₀): the increment is ≤ 0, so rounding keeps u₀ ≤ φ₀.
    let u0 = phi0.zip_map(&w0, |p, w| p + eta * (w - p));
    let mut terms = vec![(Profile::constant(1.0), u0.clone())];
    if !monotone {
        let e = eps_profile(problem);
        let neg = Profile::new("-eps(t)", move |t| {
            let (a, b) = e.eval(t);
            (-a, -b)
        });
        terms.push((neg, phi0.clone()));
    }
    let base = BarrierField::new("subbarrier", g, terms.clone(), Profile::constant(0.0));

    let mut c_tight = 0.0f64;
    for &t in &times {
        let s = base.slice(t);
        let sl = problem.family.slice(t);
        for i in 0..g.len() {
            let mu = problem.mu.value(t, i);
            if mu <= 0.0 {
                continue;
            }
            let m = problem.family.node(&sl, i) + problem.shift + s.hess[i];
            let det = m.det_plus(n);
            if det <= 0.0 {
                return Err(VerifyError::Unsupported(format!("degenerate subbarrier form at t={t}, node {i}")));
            }
            let need = s.dt[i] + problem.forcing.eval(t, i, s.value[i]) + mu.ln() - det.ln();
            c_tight = c_tight.max(need);
        }
    }
    let c_closed_form = monotone.then(|| {
        let mut f_plus = 0.0f64;
        for &t in &times {
            for i in 0..g.len() {
                f_plus = f_plus.max(problem.forcing.eval(t, i, u0.values()[i]));
            }
        }
        w0.values().iter().map(|w| -(n as f64) * eta.ln() - w).fold(f64::NEG_INFINITY, f64::max) + f_plus
    });
    let c = c_closed_form.map_or(c_tight, |p| p.max(c_tight));

    let field = BarrierField::new("subbarrier", g, terms, Profile::linear(0.0, -c));
    let tol = opts.tol.unwrap_or_else(|| default_tol(&g));
    let report = check_subsolution(&field, problem, &check_times(problem.horizon), tol, None);
    let start = field.value_at(0.0);
    let below_datum = start.values().iter().zip(phi0.values()).all(|(u, p)| u <= p);
    let within_eps = start.values().iter().zip(phi0.values()).all(|(u, p)| *u >= p - eps);
    Ok(SubBarrier { field, eps, eta, w0, c, c_tight, c_closed_form, eps_t_max, report, below_datum, within_eps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuperVariant {
    /// `v = φ̃₀ + Ct` for positive densities.
    Positive,
    /// `v = φ̃₀ − t·u + Ct` for `μ = e^u f`.
    Canonical,
}

#[derive(Clone, Debug)]
pub struct SuperBarrier {
    pub field: BarrierField,
    pub variant: SuperVariant,
    pub eps: f64,
    /// Heat-kernel bandwidth of the smoothing (0 when `ε = 0`).
    pub bandwidth: f64,
    /// Additive lift `ε/2`.
    pub lift: f64,
    pub c: f64,
    /// `min` eigenvalue of `Θ + dd^c φ̃₀`.
    pub psh_defect: f64,
    pub report: CertificateReport,
    /// Nodes where `μ = 0` together with their stencil neighbors; skipped
    /// by the residual check.
    pub exclude: Vec<bool>,
    /// Largest residual over the excluded nodes, for the record.
    pub excluded_worst: Option<f64>,
    /// `v(0,·) ≥ φ₀` at every node.
    pub above_datum: bool,
    /// `v(0,·) ≤ φ₀ + ε` off the vanishing set.
    pub within_eps: bool,
}

impl SuperBarrier {
    pub fn passes(&self) -> bool {
        self.report.pass && self.above_datum && self.within_eps
    }
}

/// Heat-kernel smoothing with `sup |φ̃₀ − φ₀| ≤ ε/2`, lifted by `ε/2`.
fn smoothed_datum(
    problem: &FlowProblem,
    eps: f64,
    config: &SolverConfig,
) -> Result<(ScalarField, f64, f64), VerifyError> {
    let phi0 = &problem.phi0;
    if eps == 0.0 {
        return Ok((phi0.clone(), 0.0, 0.0));
    }
    let n = problem.n();
    let big = problem.family.big_theta + problem.shift;
    let mut sigma = 0.05;
    let mut deviation = f64::INFINITY;
    for _ in 0..40 {
        let m = mollify(phi0, sigma)?;
        deviation = m.values().iter().zip(phi0.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if deviation <= 0.5 * eps * (1.0 - 1e-9) {
            let defect =
                complex_hessian(&m).mats().iter().map(|h| (big + *h).min_eigenvalue(n)).fold(f64::INFINITY, f64::min);
            if defect >= -config.tol_psh {
                return Ok((m.add_scalar(0.5 * eps), sigma, 0.5 * eps));
            }
        }
        sigma *= 0.5;
    }
    Err(VerifyError::Bandwidth { bandwidth: sigma, deviation })
}

/// Nodes with `μ = 0` and every node whose stencil box touches one.
fn vanishing_mask(g: &TorusGrid, exp_u: &ScalarField) -> Vec<bool> {
    let mut mask = vec![false; g.len()];
    let d = g.dims();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for (i, &e) in exp_u.values().iter().enumerate() {
        if e == 0.0 {
            for o in &offsets {
                mask[g.shifted(i, o)] = true;
            }
        }
    }
    mask
}

/// The ε-superbarrier: `φ̃₀ + Ct` for positive densities, `φ̃₀ − t·u + Ct`
/// (with `u ≤ 0` normalized) for canonical ones.
pub fn build_superbarrier(
    problem: &FlowProblem,
    eps: f64,
    tol: Option<f64>,
    config: &SolverConfig,
) -> Result<SuperBarrier, VerifyError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(VerifyError::Eps(eps));
    }
    let g = *problem.grid();
    let n = problem.n();
    let phi0 = &problem.phi0;
    let (smooth, bandwidth, lift) = smoothed_datum(problem, eps, config)?;
    let big = problem.family.big_theta + problem.shift;
    let hs = complex_hessian(&smooth);
    let psh_defect = hs.mats().iter().map(|h| (big + *h).min_eigenvalue(n)).fold(f64::INFINITY, f64::min);
    let times = construction_times(problem.horizon);

    let (variant, field, exclude, c) = match problem.mu.kind {
        DensityKind::Positive => {
            let mut c = 0.0f64;
            for &t in &times {
                for i in 0..g.len() {
                    let det = (big + hs.at(i)).det_plus(n);
                    let need = det.ln() - problem.mu.value(t, i).ln() - problem.forcing.eval(t, i, smooth.values()[i]);
                    c = c.max(need);
                }
            }
            let f = BarrierField::new(
                "superbarrier",
                g,
                vec![(Profile::constant(1.0), smooth.clone())],
                Profile::linear(0.0, c),
            );
            (SuperVariant::Positive, f, vec![false; g.len()], c)
        }
        DensityKind::Canonical => {
            let exp_u = problem.mu.exp_u().expect("canonical density stores e^u");
            let top = exp_u.max();
            // u − max u, with −∞ replaced by 0 on the (excluded) zero set.
            let u = exp_u.map(|e| if e > 0.0 { (e / top).ln() } else { 0.0 });
            let exclude = vanishing_mask(&g, exp_u);
            let hu = complex_hessian(&u);
            let mut c = 0.0f64;
            for &t in &times {
                let sl = problem.family.slice(t);
                for i in (0..g.len()).filter(|&i| !exclude[i]) {
                    let m = problem.family.node(&sl, i) + problem.shift + hs.at(i) - t * hu.at(i);
                    let det = m.det_plus(n);
                    if det == 0.0 {
                        continue;
                    }
                    // e^{−u}μ is positive off the zero set.
                    let mu_shift = problem.mu.value(t, i) / (u.values()[i]).exp();
                    let v = smooth.values()[i] - t * u.values()[i];
                    c = c.max(det.ln() - mu_shift.ln() - problem.forcing.eval(t, i, v));
                }
            }
            let f = BarrierField::new(
                "superbarrier",
                g,
                vec![(Profile::constant(1.0), smooth.clone()), (Profile::linear(0.0, -1.0), u)],
                Profile::linear(0.0, c),
            );
            (SuperVariant::Canonical, f, exclude, c)
        }
        DensityKind::OpenVanishing => {
            return Err(VerifyError::Unsupported("superbarrier needs a positive or canonical density".into()))
        }
    };
    let tol = tol.unwrap_or_else(|| default_tol(&g));
    let checks = check_times(problem.horizon);
    let any_excluded = exclude.iter().any(|&b| b);
    let report = check_supersolution(&field, problem, &checks, tol, any_excluded.then_some(&exclude[..]));
    let excluded_worst = any_excluded.then(|| {
        checks
            .iter()
            .flat_map(|&t| {
                residual_at(&field, problem, t)
                    .into_iter()
                    .zip(&exclude)
                    .filter(|(_, &e)| e)
                    .map(|(r, _)| r)
                    .collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let start = field.value_at(0.0);
    let above_datum = start.values().iter().zip(phi0.values()).all(|(v, p)| v >= p);
    let zero = |i: usize| problem.mu.exp_u().is_some_and(|e| e.values()[i] == 0.0);
    let within_eps = start.values().iter().zip(phi0.values()).enumerate().all(|(i, (v, p))| zero(i) || *v <= p + eps);
    Ok(SuperBarrier {
        field,
        variant,
        eps,
        bandwidth,
        lift,
        c,
        psh_defect,
        report,
        exclude,
        excluded_worst,
        above_datum,
        within_eps,
    })
}

/// `u = e^{−t}φ₀ + (1 − e^{−t})φ_KE + h(t)e^{−t}` with
/// `h' = n e^t log(1 − e^{−t})`, `h(0) = 0`.
pub fn ke_lower_barrier(phi0: &ScalarField, phi_ke: &ScalarField, n: usize) -> BarrierField {
    let g = *phi0.grid();
    let decay = Profile::new("e^-t", |t: f64| ((-t).exp(), -(-t).exp()));
    let rise = Profile::new("1-e^-t", |t: f64| (-(-t).exp_m1(), (-t).exp()));
    let offset = Profile::new("h(t)e^-t", move |t: f64| {
        let (h, dh) = (h_profile(t, n), h_derivative(t, n));
        (h * (-t).exp(), (dh - h) * (-t).exp())
    });
    BarrierField::new("ke_lower", g, vec![(decay, phi0.clone()), (rise, phi_ke.clone())], offset)
}

/// `v = (1 + e^{−t})ψ + h₂(t)e^{−t} + Be^{−t}` with `B = max(φ₀ − 2ψ)` and
/// `h₂' = n e^t log(1 + e^{−t})`, `h₂(0) = 0`.
pub fn ke_upper_barrier(phi0: &ScalarField, psi: &ScalarField, n: usize) -> BarrierField {
    let g = *phi0.grid();
    let b = phi0.values().iter().zip(psi.values()).map(|(p, s)| p - 2.0 * s).fold(f64::NEG_INFINITY, f64::max);
    let coef = Profile::new("1+e^-t", |t: f64| (1.0 + (-t).exp(), -(-t).exp()));
    let offset = Profile::new("(h2(t)+B)e^-t", move |t: f64| {
        let (h, dh) = (h2_profile(t, n), h2_derivative(t, n));
        ((h + b) * (-t).exp(), (dh - h - b) * (-t).exp())
    });
    BarrierField::new("ke_upper", g, vec![(coef, psi.clone())], offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{BackgroundFamily, ClassSchedule};
    use crate::elliptic::solve_static;
    use crate::herm::HermMat;
    use crate::parabolic::{solve_detailed, ForcingSpec};
    use crate::verify::comparison_gap;
    use std::f64::consts::PI;

    fn flat() -> FlowProblem {
        let g = TorusGrid::new(1, 16).unwrap();
        let fam = BackgroundFamily::constant(g, HermMat::identity(1), 1.0).unwrap();
        let mu = DensitySpec::positive(ScalarField::constant(g, 1.0), TimeFn::One).unwrap();
        FlowProblem::new("flat", fam, mu, ForcingSpec::zero(), ScalarField::zeros(g), 1.0).unwrap()
    }

    fn datum(g: TorusGrid) -> ScalarField {
        ScalarField::from_fn(g, |x| 0.01 * (2.0 * PI * x[0]).cos() + 0.005 * (2.0 * PI * (x[0] + x[1])).sin())
    }

    fn nkrf(m: usize, mu: DensitySpec) -> FlowProblem {
        let g = TorusGrid::new(1, m).unwrap();
        let s = ClassSchedule::nkrf(1, HermMat::identity(1), HermMat::scalar(1, 0.5)).unwrap();
        let fam = BackgroundFamily::new(g, s, None, None, None, 0.5).unwrap();
        FlowProblem::new("nkrf", fam, mu, ForcingSpec::linear(1.0), datum(g), 0.5).unwrap()
    }

    #[test]
    fn flat_barriers_are_exact() {
        let p = flat();
        let g = *p.grid();
        let opts = SubbarrierOptions { w0: Some(ScalarField::zeros(g)), ..Default::default() };
        let sub = build_subbarrier(&p, 0.0, &opts, &SolverConfig::default()).unwrap();
        assert!(sub.passes());
        assert_eq!(sub.field.value_at(0.0), p.phi0);
        assert_eq!(sub.c_tight, 0.0);
        assert_eq!(sub.c, std::f64::consts::LN_2);
        let sup = build_superbarrier(&p, 0.0, None, &SolverConfig::default()).unwrap();
        assert!(sup.passes());
        assert_eq!(sup.c, 0.0);
        assert_eq!(sup.field.value_at(0.0), p.phi0);
    }

    #[test]
    fn envelopes_on_flat_data() {
        let p = flat();
        let e = bounded_envelopes(&p).unwrap();
        assert_eq!(e, Envelopes { c1: 0.0, rho1: 0.0, c2: 0.0, rho2: 0.0 });
        let g = *p.grid();
        let times = check_times(1.0);
        assert!(check_subsolution(&e.lower(g), &p, &times, 0.0, None).pass);
        assert!(check_supersolution(&e.upper(g), &p, &times, 0.0, None).pass);
    }

    #[test]
    fn positive_density_barriers_self_certify_and_bound_the_solution() {
        let g = TorusGrid::new(1, 32).unwrap();
        let mu = DensitySpec::positive(ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos()), TimeFn::One)
            .unwrap();
        let p = nkrf(32, mu);
        let cfg = SolverConfig::default();
        let eps = 0.01;
        let sub = build_subbarrier(&p, eps, &SubbarrierOptions::default(), &cfg).unwrap();
        let sup = build_superbarrier(&p, eps, None, &cfg).unwrap();
        assert!(sub.passes(), "{:?}", sub.report);
        assert!(sup.passes(), "{:?}", sup.report);
        assert!(sub.c >= sub.c_tight);

        let rep = solve_detailed(&p, &cfg.clone().with_snapshots(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let traj = &rep.trajectory;
        let h = g.h_max();
        let tol = 10.0 * (h * h + rep.dt_max) * p.horizon;
        assert!(comparison_gap(traj, &sup.field.sample(&traj.times)).unwrap() <= tol);
        assert!(comparison_gap(&sub.field.sample(&traj.times), traj).unwrap() <= tol);
        let env = bounded_envelopes(&p).unwrap();
        assert!(sandwich_excess(traj, &env) <= tol);
    }

    #[test]
    fn canonical_superbarrier_skips_the_zero_node() {
        let g = TorusGrid::new(1, 32).unwrap();
        let mut e = ScalarField::from_fn(g, |x| 0.6 + 0.4 * (2.0 * PI * x[0]).cos()).into_values();
        e[g.index(&[8, 8])] = 0.0;
        let exp_u = ScalarField::from_values(g, e).unwrap();
        let mu = DensitySpec::canonical(exp_u, ScalarField::constant(g, 1.0), TimeFn::One).unwrap();
        let p = nkrf(32, mu);
        let sup = build_superbarrier(&p, 0.01, None, &SolverConfig::default()).unwrap();
        assert_eq!(sup.variant, SuperVariant::Canonical);
        assert_eq!(sup.report.excluded, 9);
        assert!(sup.passes(), "{:?}", sup.report);
        assert!(sup.excluded_worst.unwrap() > 0.0);
    }

    #[test]
    fn ke_step_barriers_certify() {
        // θ_t = e^{−t}θ₀ + (1 − e^{−t})β with θ₀ ⪯ 2β.
        let g = TorusGrid::new(1, 32).unwrap();
        let beta = HermMat::identity(1);
        let mu = DensitySpec::positive(ScalarField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin()), TimeFn::One)
            .unwrap();
        let cfg = SolverConfig::default();
        let sp = StaticProblem::flat(g, beta, mu.clone(), 1.0).unwrap();
        let ke = solve_static(&sp, &cfg).unwrap().phi;
        let s = ClassSchedule::nkrf(1, HermMat::scalar(1, 1.5), beta).unwrap();
        let fam = BackgroundFamily::new(g, s, None, None, None, 3.0).unwrap();
        let phi0 = ke.add(&datum(g));
        let p = FlowProblem::new("ke", fam, mu, ForcingSpec::linear(1.0), phi0.clone(), 3.0).unwrap();
        let tol = default_tol(&g);
        let times = check_times(3.0);
        let lo = ke_lower_barrier(&phi0, &ke, 1);
        let hi = ke_upper_barrier(&phi0, &ke, 1);
        assert!(check_subsolution(&lo, &p, &times, tol, None).pass);
        assert!(check_supersolution(&hi, &p, &times, tol, None).pass);
        assert_eq!(lo.value_at(0.0), phi0);
        assert!(hi.value_at(0.0).values().iter().zip(phi0.values()).all(|(v, p)| v >= p));
    }
}
