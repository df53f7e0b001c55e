//! Property tests for the structural invariants of each module.

use maflow_core::background::{regularity_modulus, t_max, BackgroundFamily, ClassSchedule, TimeFn};
use maflow_core::elliptic::{solve_static, solve_static_from, StaticProblem};
use maflow_core::grid::{complex_hessian, laplacian, mean, mollify, ScalarField, TorusGrid};
use maflow_core::herm::HermMat;
use maflow_core::ma_ops::{flow_rhs, RhsContext};
use maflow_core::parabolic::{solve, step, step_size, DensitySpec, DtRule, FlowProblem, ForcingSpec, SolverConfig};
use maflow_core::scenarios::{catalog, scenario_calabi_yau, Scenario};
use maflow_core::verify::{
    bounded_envelopes, build_subbarrier, build_superbarrier, sandwich_excess, SubbarrierOptions,
};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(n: usize, m: usize) -> TorusGrid {
    TorusGrid::new(n, m).unwrap()
}

fn field(g: TorusGrid, values: Vec<f64>) -> ScalarField {
    ScalarField::from_values(g, values).unwrap()
}

fn values(len: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, len)
}

fn herm(n: usize) -> impl Strategy<Value = HermMat> {
    (-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(move |(a, b, re, im)| {
        if n == 1 {
            HermMat::scalar(1, a)
        } else {
            HermMat::new(a, b, Complex64::new(re, im))
        }
    })
}

/// `B B*` for a random complex `B`: PSD by construction.
fn psd(n: usize) -> impl Strategy<Value = HermMat> {
    prop::array::uniform8(-1.0..1.0f64).prop_map(move |v| {
        if n == 1 {
            return HermMat::scalar(1, v[0] * v[0] + v[1] * v[1]);
        }
        let b = [
            [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
            [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
        ];
        let d0 = b[0][0].norm_sqr() + b[0][1].norm_sqr();
        let d1 = b[1][0].norm_sqr() + b[1][1].norm_sqr();
        let off = b[0][0] * b[1][0].conj() + b[0][1] * b[1][1].conj();
        HermMat::new(d0, d1, off)
    })
}

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 32, ..ProptestConfig::default() }
}

fn few() -> ProptestConfig {
    ProptestConfig { cases: 4, ..ProptestConfig::default() }
}

// grid

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn hessian_is_linear(n in 1usize..=2, seed in values(8usize.pow(4), 1.0), other in values(8usize.pow(4), 1.0),
                         alpha in -2.0..2.0f64, beta in -2.0..2.0f64) {
        let g = grid(n, 8);
        let (a, b) = (field(g, seed[..g.len()].to_vec()), field(g, other[..g.len()].to_vec()));
        let lhs = complex_hessian(&a.scale(alpha).add(&b.scale(beta)));
        let rhs = complex_hessian(&a).scale(alpha).add(&complex_hessian(&b).scale(beta));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12, "{}", lhs.max_abs_diff(&rhs));
    }

    #[test]
    fn hessian_commutes_with_translations(n in 1usize..=2, v in values(8usize.pow(4), 1.0),
                                          shift in prop::array::uniform4(-9i64..9)) {
        let g = grid(n, 8);
        let a = field(g, v[..g.len()].to_vec());
        let moved = complex_hessian(&a.shifted(&shift));
        let base = complex_hessian(&a);
        for i in 0..g.len() {
            prop_assert_eq!(moved.at(g.shifted(i, &shift)), base.at(i));
        }
    }

    #[test]
    fn one_dimensional_hessian_is_quarter_laplacian(v in values(256, 1.0)) {
        let g = grid(1, 16);
        let a = field(g, v);
        let h = complex_hessian(&a);
        let lap = laplacian(&a);
        for i in 0..g.len() {
            prop_assert_eq!(h.at(i).d0.to_bits(), (0.25 * lap.values()[i]).to_bits());
        }
    }

    #[test]
    fn mollify_does_not_increase_oscillation(v in values(256, 1.0), bw in 0.0..0.3f64) {
        let g = grid(1, 16);
        let a = field(g, v);
        let s = mollify(&a, bw).unwrap();
        let (ma, ms) = (mean(&a), mean(&s));
        let before = a.values().iter().fold(0.0f64, |m, x| m.max((x - ma).abs()));
        let after = s.values().iter().fold(0.0f64, |m, x| m.max((x - ms).abs()));
        prop_assert!(after <= before + 1e-12, "{after} > {before}");
    }
}

// ma_ops

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn det_plus_is_monotone_in_the_psd_order(n in 1usize..=2, h in herm(2), p in psd(2)) {
        let (h, p) = (restrict(h, n), restrict(p, n));
        prop_assert!(h.det_plus(n) <= (h + p).det_plus(n) + 1e-10);
    }

    #[test]
    fn det_plus_is_det_on_psd_input(n in 1usize..=2, p in psd(2)) {
        let p = restrict(p, n);
        let d = p.det(n);
        prop_assert!((p.det_plus(n) - d).abs() <= 1e-10 * d.abs().max(1e-300));
    }

    #[test]
    fn det_plus_root_is_concave_on_psd(n in 1usize..=2, a in psd(2), b in psd(2)) {
        let (a, b) = (restrict(a, n), restrict(b, n));
        let root = |m: HermMat| m.det_plus(n).powf(1.0 / n as f64);
        let mid = root(0.5 * (a + b));
        prop_assert!(mid >= 0.5 * (root(a) + root(b)) - 1e-10);
    }
}

fn restrict(h: HermMat, n: usize) -> HermMat {
    if n == 1 {
        HermMat::scalar(1, h.d0)
    } else {
        h
    }
}

/// `ω ≡ I`, a positive density and `φ₀` built from small random values.
fn flat_problem(g: TorusGrid, phi0: ScalarField, forcing: ForcingSpec, horizon: f64) -> FlowProblem {
    let fam = BackgroundFamily::constant(g, HermMat::identity(g.n()), horizon).unwrap();
    let mu =
        DensitySpec::positive(ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos()), TimeFn::One).unwrap();
    FlowProblem::new("prop", fam, mu, forcing, phi0, horizon).unwrap()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn rhs_is_non_increasing_under_constant_shift(n in 1usize..=2, v in values(8usize.pow(4), 1e-3),
                                                  c in 0.0..2.0f64, alpha in 0.0..2.0f64) {
        let g = grid(n, 8);
        let phi = field(g, v[..g.len()].to_vec());
        let p = flat_problem(g, phi.clone(), ForcingSpec::linear(alpha), 1.0);
        let config = SolverConfig::default();
        let base = flow_rhs(&phi, 0.0, &p, &config);
        let up = flow_rhs(&phi.add_scalar(c), 0.0, &p, &config);
        for i in 0..g.len() {
            prop_assert!(up.values()[i] <= base.values()[i] + 1e-12);
        }
    }
}

// background

fn pd(n: usize) -> impl Strategy<Value = HermMat> {
    psd(2).prop_map(move |p| restrict(p, n) + HermMat::scalar(n, 0.1))
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn omega_is_lipschitz_in_time(n in 1usize..=2, a in pd(2), b in herm(2), krf in any::<bool>(),
                                  t in 0.0..0.3f64, dt in 0.0..0.2f64) {
        let (a, b) = (restrict(a, n), restrict(b, n));
        // Keep the class positive on [0, 0.5] for both rules.
        let b = if krf { b } else { b + a };
        let s = if krf { ClassSchedule::krf(n, a, b) } else { ClassSchedule::nkrf(n, a, b) }.unwrap();
        prop_assume!(s.class_at(0.5).min_eigenvalue(n) > 0.0 && s.class_at(0.0).min_eigenvalue(n) > 0.0);
        let fam = BackgroundFamily::new(grid(n, 8), s, None, None, None, 0.5);
        prop_assume!(fam.is_ok());
        let fam = fam.unwrap();
        let l = if krf { b.max_abs_entry() } else { (a - b).max_abs_entry() };
        let diff = fam.omega_at(t).unwrap().max_abs_diff(&fam.omega_at(t + dt).unwrap());
        prop_assert!(diff <= l * dt + 1e-10, "{diff} > {}", l * dt);
    }

    #[test]
    fn t_max_is_monotone_in_the_target_class(n in 1usize..=2, a in pd(2), b in herm(2), delta in 0.0..3.0f64,
                                             krf in any::<bool>()) {
        let (a, b) = (restrict(a, n), restrict(b, n));
        let make = |b: HermMat| if krf { ClassSchedule::krf(n, a, b) } else { ClassSchedule::nkrf(n, a, b) }.unwrap();
        let before = t_max(&make(b));
        let after = t_max(&make(b + HermMat::scalar(n, delta)));
        prop_assert!(after >= before - 1e-9, "{after} < {before}");
    }

    #[test]
    fn constant_family_has_zero_modulus(n in 1usize..=2, a in pd(2), eps in 0.01..0.4f64) {
        let fam = BackgroundFamily::constant(grid(n, 8), restrict(a, n), 1.0).unwrap();
        prop_assert_eq!(regularity_modulus(&fam, eps, 64).unwrap(), 0.0);
    }

    #[test]
    fn nkrf_class_is_the_exponential_interpolation(n in 1usize..=2, a in pd(2), b in pd(2), t in 0.0..3.0f64) {
        let (a, b) = (restrict(a, n), restrict(b, n));
        let fam = BackgroundFamily::new(grid(n, 8), ClassSchedule::nkrf(n, a, b).unwrap(), None, None, None, 3.0).unwrap();
        let e = (-t).exp();
        let want = e * a + (1.0 - e) * b;
        let w = fam.omega_at(t).unwrap();
        for m in w.mats() {
            prop_assert_eq!(*m, want);
        }
    }
}

// parabolic

proptest! {
    #![proptest_config(cfg())]

    /// One explicit step inside the monotone restriction keeps `φ ≤ ψ`.
    #[test]
    fn explicit_step_preserves_order(v in values(256, 1e-3), lift in values(256, 1e-3),
                                     alpha in 0.0..2.0f64, t in 0.0..0.5f64) {
        let g = grid(1, 16);
        let phi = field(g, v);
        let psi = phi.add(&field(g, lift.iter().map(|x| x.abs()).collect()));
        let p = flat_problem(g, phi.clone(), ForcingSpec::linear(alpha), 1.0);
        let q = flat_problem(g, psi.clone(), ForcingSpec::linear(alpha), 1.0);
        let config = SolverConfig::default();
        let mut scratch = vec![0.0; g.len()];
        let s1 = RhsContext::new(&p, &config).eval(phi.values(), t, &mut scratch);
        let s2 = RhsContext::new(&q, &config).eval(psi.values(), t, &mut scratch);
        let dt = step_size(&p, &config, &s1).min(step_size(&q, &config, &s2));
        let (a, _) = step(&phi, t, dt, &p, &config).unwrap();
        let (b, _) = step(&psi, t, dt, &p, &config).unwrap();
        for i in 0..g.len() {
            prop_assert!(a.values()[i] <= b.values()[i] + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(few())]

    #[test]
    fn constant_shift_decays_like_the_scalar_ode(c in -1.0..1.0f64, alpha in 0.5..2.0f64, n in 1usize..=2) {
        let g = grid(n, 8);
        let phi0 = ScalarField::from_fn(g, |x| 0.002 * (2.0 * PI * x[0]).cos());
        let horizon = 0.05;
        let p = flat_problem(g, phi0.clone(), ForcingSpec::linear(alpha), horizon);
        let mut q = p.clone();
        q.phi0 = phi0.add_scalar(c);
        let config = SolverConfig::default().with_dt(DtRule::Fixed(1e-6)).with_snapshots(vec![0.025]);
        let (a, b) = (solve(&p, &config).unwrap(), solve(&q, &config).unwrap());
        for k in 0..a.times.len() {
            let shift = c * (-alpha * a.times[k]).exp();
            let d = b.snapshots[k].sub(&a.snapshots[k].add_scalar(shift)).sup_norm();
            prop_assert!(d <= 1e-6, "t = {}: {d}", a.times[k]);
        }
    }

    #[test]
    fn first_snapshot_is_the_datum(v in values(256, 1e-3), explicit in any::<bool>()) {
        let g = grid(1, 16);
        let phi0 = field(g, v);
        let p = flat_problem(g, phi0.clone(), ForcingSpec::linear(1.0), 0.02);
        let config = if explicit {
            SolverConfig::default()
        } else {
            SolverConfig::default().with_stepper("backward_euler").with_dt(DtRule::Fixed(0.005))
        };
        let traj = solve(&p, &config).unwrap();
        prop_assert_eq!(traj.times[0], 0.0);
        prop_assert_eq!(&traj.snapshots[0], &phi0);
    }
}

// elliptic

fn static_problem(g: TorusGrid, amp: f64, alpha: f64) -> StaticProblem {
    let mu = ScalarField::from_fn(g, |x| 1.0 + amp * (2.0 * PI * (x[0] + x[1])).cos());
    StaticProblem::flat(g, HermMat::identity(g.n()), DensitySpec::positive(mu, TimeFn::One).unwrap(), alpha).unwrap()
}

proptest! {
    #![proptest_config(few())]

    #[test]
    fn static_solution_is_a_fixed_point_of_the_flow(amp in 0.0..0.5f64, n in 1usize..=2) {
        let g = grid(n, 8);
        let sp = static_problem(g, amp, 1.0);
        let config = SolverConfig::default();
        let s = solve_static(&sp, &config).unwrap();
        let p = sp.flow_problem(s.phi.clone(), 1.0).unwrap();
        let mut scratch = vec![0.0; g.len()];
        let stats = RhsContext::new(&p, &config).eval(s.phi.values(), 0.0, &mut scratch);
        let dt = step_size(&p, &config, &stats);
        let (next, _) = step(&s.phi, 0.0, dt, &p, &config).unwrap();
        let moved = next.sub(&s.phi).sup_norm();
        prop_assert!(moved <= dt * config.stationarity_tol * (1.0 + 1e-9), "{moved}");
    }

    #[test]
    fn static_solutions_do_not_depend_on_the_start(
        amp in 0.0..0.5f64,
        a1 in -0.04..0.04f64,
        a2 in -0.01..0.01f64,
        p in 0.0..1.0f64,
    ) {
        let g = grid(1, 16);
        let sp = static_problem(g, amp, 1.0);
        let config = SolverConfig::default();
        let a = solve_static(&sp, &config).unwrap();
        // |dd^c| stays below π²(a1 + 2 a2) < 1, so the start is admissible.
        let init = ScalarField::from_fn(g, |x| {
            a1 * (2.0 * PI * (x[0] + p)).cos() + a2 * (2.0 * PI * (x[0] + x[1] - p)).sin()
        });
        let b = solve_static_from(&sp, &init, &config).unwrap();
        prop_assert!(a.phi.sub(&b.phi).sup_norm() <= 10.0 * config.stationarity_tol);
    }

    #[test]
    fn normalized_static_solution_has_zero_mean(amp in 0.0..0.5f64, n in 1usize..=2) {
        let g = grid(n, 8);
        let s = solve_static(&static_problem(g, amp, 0.0), &SolverConfig::default()).unwrap();
        prop_assert!(mean(&s.phi).abs() <= 1e-12);
    }
}

#[test]
fn unnormalized_flow_differs_from_the_static_solution_by_a_constant() {
    let g = grid(1, 16);
    let sp = static_problem(g, 0.3, 0.0);
    let config = SolverConfig::default();
    let s = solve_static(&sp, &config).unwrap();
    let p = sp.flow_problem(ScalarField::zeros(g), 20.0).unwrap();
    let traj = solve(&p, &config.clone().with_stepper("backward_euler").with_dt(DtRule::Fixed(0.05))).unwrap();
    let d = traj.last().sub(&s.phi);
    let spread = d.max() - d.min();
    assert!(spread <= 5e-3, "{spread}");
}

// verify

proptest! {
    #![proptest_config(few())]

    #[test]
    fn barriers_certify_themselves_and_stay_close(k in 0usize..5, eps in 0.005..0.05f64) {
        let cp = &catalog(16).unwrap()[k];
        let p = &cp.problem;
        let config = SolverConfig::default();
        let sub = build_subbarrier(p, eps, &SubbarrierOptions::default(), &config).unwrap();
        prop_assert!(sub.report.pass, "{}: {:?}", cp.id, sub.report);
        prop_assert!(sub.below_datum && sub.within_eps);
        let u0 = sub.field.value_at(0.0);
        for (u, f) in u0.values().iter().zip(p.phi0.values()) {
            prop_assert!(*u <= *f && *u >= *f - eps);
        }
        let sup = build_superbarrier(p, eps, None, &config).unwrap();
        prop_assert!(sup.report.pass, "{}: {:?}", cp.id, sup.report);
        prop_assert!(sup.above_datum && sup.within_eps);
    }
}

#[test]
fn solutions_lie_between_the_envelopes() {
    let config = SolverConfig::default().with_snapshots(vec![0.1, 0.2, 0.3, 0.4]);
    for cp in catalog(16).unwrap() {
        let env = bounded_envelopes(&cp.problem).unwrap();
        let traj = solve(&cp.problem, &config).unwrap();
        let h = cp.problem.grid().h_max();
        let excess = sandwich_excess(&traj, &env);
        assert!(excess <= 10.0 * h * h, "{}: {excess}", cp.id);
    }
}

// scenarios

#[test]
fn scenarios_are_deterministic() {
    let s = scenario_calabi_yau(16, 2.0);
    let (a, b) = (s.run().unwrap(), s.run().unwrap());
    assert_eq!(a.manifest(), b.manifest());
    assert_eq!(a.series, b.series);
}
