//! Time-dependent background forms `ω_t`: cohomology-class schedules, the
//! bounds `θ ⪯ ω_t ⪯ Θ`, the extinction time, and regularity moduli.
//!
//! Classes are constant Hermitian matrices (every class on the flat torus
//! has a translation-invariant representative). An optional perturbation
//! adds an exact, mean-zero form `τ(t)·S(x)`.

use crate::grid::{trig::TrigSeries, HermitianField, TorusGrid};
use crate::herm::HermMat;
use thiserror::Error;

/// Slack used when checking matrix inequalities on samples.
pub const ORDER_TOL: f64 = 1e-10;

/// Default time sampling density for bound and regularity sweeps.
pub const SAMPLES_PER_UNIT: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum BackgroundError {
    #[error("{0} must be positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("theta must be positive semidefinite")]
    ThetaNotSemipositive,
    #[error("bound {which} violated at t={t}, node {node} (eigenvalue {eig})")]
    Bound { which: &'static str, t: f64, node: usize, eig: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("perturbation must have zero class (mean entry {0})")]
    PerturbationClass(f64),
    #[error("matrix dimension does not match grid (n={0})")]
    Dimension(usize),
    #[error("regularity window: need 0 < eps < T/2, got eps={eps}, T={horizon}")]
    Window { eps: f64, horizon: f64 },
    #[error("unknown perturbation {0:?}")]
    UnknownPerturbation(String),
    #[error("time-change rate must be positive, got {0}")]
    Rate(f64),
}

/// Scalar time profiles used by scaled schedules, perturbations and
/// densities.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeFn {
    One,
    /// `e^{rate·t}`
    Exp {
        rate: f64,
    },
    /// `cos(rate·t)`
    Cos {
        rate: f64,
    },
    /// `1 + amp·sin(freq·t)`
    Sine {
        amp: f64,
        freq: f64,
    },
    /// `1 + jump·𝟙_{t > at}`
    Step {
        at: f64,
        jump: f64,
    },
    /// `(1 + α(s−s₀))^power · inner(t₀ + log(1 + α(s−s₀))/α)`
    Retimed {
        inner: Box<TimeFn>,
        retime: Retime,
        power: i32,
    },
}

/// The change of time variable `s − s₀ = (e^{α(t−t₀)} − 1)/α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retime {
    pub alpha: f64,
    pub t0: f64,
    pub s0: f64,
}

impl Retime {
    pub fn new(alpha: f64, t0: f64, s0: f64) -> Result<Self, BackgroundError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(BackgroundError::Rate(alpha));
        }
        Ok(Retime { alpha, t0, s0 })
    }

    /// `1 + α(s − s₀)`
    pub fn factor(&self, s: f64) -> f64 {
        1.0 + self.alpha * (s - self.s0)
    }

    pub fn t_of_s(&self, s: f64) -> f64 {
        self.t0 + (self.alpha * (s - self.s0)).ln_1p() / self.alpha
    }

    pub fn s_of_t(&self, t: f64) -> f64 {
        self.s0 + (self.alpha * (t - self.t0)).exp_m1() / self.alpha
    }
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::One => 1.0,
            TimeFn::Exp { rate } => (rate * t).exp(),
            TimeFn::Cos { rate } => (rate * t).cos(),
            TimeFn::Sine { amp, freq } => 1.0 + amp * (freq * t).sin(),
            TimeFn::Step { at, jump } => {
                if t > *at {
                    1.0 + jump
                } else {
                    1.0
                }
            }
            TimeFn::Retimed { inner, retime, power } => retime.factor(t).powi(*power) * inner.eval(retime.t_of_s(t)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFn::One)
    }
}

/// How the class moves with time.
#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    /// `e^{−t}A + (1−e^{−t})B`
    Nkrf,
    /// `A + tB`
    Krf,
    /// `A`
    Constant,
    /// `f(t)·A`
    Scaled(TimeFn),
    /// `(1 + α(s−s₀))·inner(t(s))`
    Retimed { inner: Box<Rule>, retime: Retime },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSchedule {
    pub n: usize,
    pub a: HermMat,
    pub b: HermMat,
    pub rule: Rule,
}

fn is_pd(m: &HermMat, n: usize) -> bool {
    m.min_eigenvalue(n) > 0.0
}

impl ClassSchedule {
    pub fn new(n: usize, a: HermMat, b: HermMat, rule: Rule) -> Result<Self, BackgroundError> {
        if n != 1 && n != 2 {
            return Err(BackgroundError::Dimension(n));
        }
        let s = ClassSchedule { n, a, b, rule };
        if !is_pd(&s.class_at(0.0), n) {
            return Err(BackgroundError::NotPositiveDefinite("initial class"));
        }
        Ok(s)
    }

    pub fn nkrf(n: usize, a: HermMat, b: HermMat) -> Result<Self, BackgroundError> {
        Self::new(n, a, b, Rule::Nkrf)
    }

    pub fn krf(n: usize, a: HermMat, b: HermMat) -> Result<Self, BackgroundError> {
        Self::new(n, a, b, Rule::Krf)
    }

    pub fn constant(n: usize, a: HermMat) -> Result<Self, BackgroundError> {
        Self::new(n, a, HermMat::ZERO, Rule::Constant)
    }

    pub fn scaled(n: usize, a: HermMat, f: TimeFn) -> Result<Self, BackgroundError> {
        Self::new(n, a, HermMat::ZERO, Rule::Scaled(f))
    }

    /// The class at time `t`.
    pub fn class_at(&self, t: f64) -> HermMat {
        Self::eval_rule(&self.rule, &self.a, &self.b, t)
    }

    fn eval_rule(rule: &Rule, a: &HermMat, b: &HermMat, t: f64) -> HermMat {
        match rule {
            Rule::Nkrf => {
                let e = (-t).exp();
                e * *a + (1.0 - e) * *b
            }
            Rule::Krf => *a + t * *b,
            Rule::Constant => *a,
            Rule::Scaled(f) => f.eval(t) * *a,
            Rule::Retimed { inner, retime } => retime.factor(t) * Self::eval_rule(inner, a, b, retime.t_of_s(t)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.rule, Rule::Constant) || matches!(&self.rule, Rule::Scaled(f) if f.is_constant())
    }

    /// Same schedule seen through a change of time variable.
    pub fn retimed(&self, retime: Retime) -> ClassSchedule {
        ClassSchedule {
            n: self.n,
            a: self.a,
            b: self.b,
            rule: Rule::Retimed { inner: Box::new(self.rule.clone()), retime },
        }
    }
}

/// Supremum of `t` with the scheduled class positive definite, `+∞` if it
/// never degenerates.
///
/// Brackets the first degeneration by scanning with step `1e-3` up to
/// `t = 100`, then bisects to `1e-10`. Past the scan window the limit class
/// decides (nkrf → B, krf → direction B); otherwise the bracket grows
/// geometrically.
pub fn t_max(s: &ClassSchedule) -> f64 {
    let n = s.n;
    if let Rule::Retimed { inner, retime } = &s.rule {
        let inner_t = t_max(&ClassSchedule { rule: (**inner).clone(), ..s.clone() });
        if inner_t.is_infinite() {
            return f64::INFINITY;
        }
        return retime.s_of_t(inner_t);
    }
    if matches!(s.rule, Rule::Constant) {
        return f64::INFINITY;
    }
    let pd = |t: f64| is_pd(&s.class_at(t), n);
    let bisect = |mut lo: f64, mut hi: f64| {
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if pd(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let step = 1e-3;
    let mut k = 0u64;
    loop {
        let (lo, hi) = (k as f64 * step, (k + 1) as f64 * step);
        if !pd(hi) {
            return bisect(lo, hi);
        }
        if hi >= 100.0 {
            break;
        }
        k += 1;
    }
    match s.rule {
        Rule::Nkrf | Rule::Krf if s.b.min_eigenvalue(n) >= 0.0 => return f64::INFINITY,
        Rule::Scaled(_) => return f64::INFINITY,
        _ => {}
    }
    let (mut lo, mut hi) = (100.0, 200.0);
    while pd(hi) {
        if hi > 1e12 {
            return f64::INFINITY;
        }
        lo = hi;
        hi *= 2.0;
    }
    bisect(lo, hi)
}

/// Exact mean-zero form `τ(t)·S(x)` added to the class.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub label: String,
    pub shape: HermitianField,
    pub time: TimeFn,
}

impl Perturbation {
    /// `dd^c` of `amplitude·cos(2π·frequency·x₁)` modulated by
    /// `cos(rate·t)`.
    pub fn cosine_bump(grid: TorusGrid, amplitude: f64, frequency: i32, rate: f64) -> Self {
        let series = TrigSeries::new().term(amplitude, [frequency, 0, 0, 0], 0.0);
        let shape = HermitianField::from_mats(grid, series.sample_hessian(grid)).expect("sampled on grid");
        Perturbation { label: "cosine_bump".into(), shape, time: TimeFn::Cos { rate } }
    }

    /// Looks a perturbation up in the named catalog.
    pub fn from_catalog(
        name: &str,
        grid: TorusGrid,
        amplitude: f64,
        frequency: i32,
        rate: f64,
    ) -> Result<Self, BackgroundError> {
        match name {
            "cosine_bump" => Ok(Self::cosine_bump(grid, amplitude, frequency, rate)),
            other => Err(BackgroundError::UnknownPerturbation(other.to_string())),
        }
    }

    pub fn catalog() -> &'static [&'static str] {
        &["cosine_bump"]
    }
}

/// Monotonicity of `t ↦ ω_t` detected on consecutive samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Constant,
    NonDecreasing,
    NonIncreasing,
    Neither,
}

/// `t ↦ ω_t` on `[0, T]` with lower and upper bound forms.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundFamily {
    grid: TorusGrid,
    pub schedule: ClassSchedule,
    pub perturbation: Option<Perturbation>,
    pub theta: HermMat,
    pub big_theta: HermMat,
    pub horizon: f64,
    pub monotonicity: Monotonicity,
}

/// Sample times `k/per_unit` in `[0, T]`, always including `T`.
pub fn sample_times(horizon: f64, per_unit: usize) -> Vec<f64> {
    let step = 1.0 / per_unit as f64;
    let mut ts: Vec<f64> = (0..).map(|k| k as f64 * step).take_while(|&t| t < horizon - 1e-12).collect();
    ts.push(horizon);
    ts
}

/// Class value and perturbation weight at one time, for fast node lookups.
#[derive(Clone, Copy, Debug)]
pub struct OmegaSlice {
    pub class: HermMat,
    pub tau: f64,
}

impl BackgroundFamily {
    /// Builds the family, deriving `θ = c_lo·I` and `Θ = c_hi·I` from the
    /// sampled spectrum when not supplied, and checks `θ ⪯ ω_t ⪯ Θ` on the
    /// sample grid.
    pub fn new(
        grid: TorusGrid,
        schedule: ClassSchedule,
        perturbation: Option<Perturbation>,
        theta: Option<HermMat>,
        big_theta: Option<HermMat>,
        horizon: f64,
    ) -> Result<Self, BackgroundError> {
        let n = grid.n();
        if schedule.n != n {
            return Err(BackgroundError::Dimension(schedule.n));
        }
        if let Some(p) = &perturbation {
            if p.shape.grid() != &grid {
                return Err(BackgroundError::Dimension(n));
            }
            let m = p.shape.mean();
            let scale = p.shape.mats().iter().fold(1.0, |a, x| f64::max(a, x.max_abs_entry()));
            if m.max_abs_entry() > 1e-12 * scale {
                return Err(BackgroundError::PerturbationClass(m.max_abs_entry()));
            }
        }
        let mut fam = BackgroundFamily {
            grid,
            schedule,
            perturbation,
            theta: HermMat::ZERO,
            big_theta: HermMat::ZERO,
            horizon,
            monotonicity: Monotonicity::Constant,
        };
        let times = sample_times(horizon, SAMPLES_PER_UNIT);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        fam.for_each_sample(&times, |_, _, w| {
            let (a, b) = w.eigenvalues(n);
            lo = lo.min(a);
            hi = hi.max(b);
        });
        let theta = theta.unwrap_or_else(|| HermMat::scalar(n, lo.max(0.0)));
        let big_theta = big_theta.unwrap_or_else(|| HermMat::scalar(n, hi));
        if theta.min_eigenvalue(n) < -ORDER_TOL {
            return Err(BackgroundError::ThetaNotSemipositive);
        }
        if big_theta.min_eigenvalue(n) <= 0.0 {
            return Err(BackgroundError::NotPositiveDefinite("Theta"));
        }
        let mut violation = None;
        fam.for_each_sample(&times, |t, node, w| {
            if violation.is_some() {
                return;
            }
            let lo_eig = (w - theta).min_eigenvalue(n);
            if lo_eig < -ORDER_TOL {
                violation = Some(BackgroundError::Bound { which: "theta <= omega_t", t, node, eig: lo_eig });
                return;
            }
            let hi_eig = (big_theta - w).min_eigenvalue(n);
            if hi_eig < -ORDER_TOL {
                violation = Some(BackgroundError::Bound { which: "omega_t <= Theta", t, node, eig: hi_eig });
            }
        });
        if let Some(e) = violation {
            return Err(e);
        }
        fam.theta = theta;
        fam.big_theta = big_theta;
        fam.monotonicity = fam.detect_monotonicity(&times);
        Ok(fam)
    }

    /// Constant family `ω ≡ A` with derived bounds.
    pub fn constant(grid: TorusGrid, a: HermMat, horizon: f64) -> Result<Self, BackgroundError> {
        Self::new(grid, ClassSchedule::constant(grid.n(), a)?, None, None, None, horizon)
    }

    /// Time-independent family given by an arbitrary positive field: the
    /// class is its mean and the remainder becomes a static perturbation.
    /// The remainder must be exact for this to be a genuine family; callers
    /// are responsible for that.
    pub fn from_static_field(omega: &HermitianField, horizon: f64) -> Result<Self, BackgroundError> {
        let grid = *omega.grid();
        let a = omega.mean();
        let shape = omega.add_const(-1.0 * a);
        let pert = if shape.mats().iter().all(|m| m.max_abs_entry() == 0.0) {
            None
        } else {
            Some(Perturbation { label: "static".into(), shape, time: TimeFn::One })
        };
        Self::new(grid, ClassSchedule::constant(grid.n(), a)?, pert, None, None, horizon)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn has_perturbation(&self) -> bool {
        self.perturbation.is_some()
    }

    fn for_each_sample(&self, times: &[f64], mut f: impl FnMut(f64, usize, HermMat)) {
        for &t in times {
            let sl = self.slice(t);
            match &self.perturbation {
                None => f(t, 0, sl.class),
                Some(p) => {
                    for (i, s) in p.shape.mats().iter().enumerate() {
                        f(t, i, sl.class + sl.tau * *s);
                    }
                }
            }
        }
    }

    fn detect_monotonicity(&self, times: &[f64]) -> Monotonicity {
        let n = self.n();
        let (mut up, mut down, mut moved) = (true, true, false);
        for w in times.windows(2) {
            let (a, b) = (self.slice(w[0]), self.slice(w[1]));
            let nodes = self.perturbation.as_ref().map_or(1, |p| p.shape.mats().len());
            for i in 0..nodes {
                let d = self.node(&b, i) - self.node(&a, i);
                let (lo, hi) = d.eigenvalues(n);
                if lo < -1e-12 {
                    up = false;
                }
                if hi > 1e-12 {
                    down = false;
                }
                if d.max_abs_entry() > 0.0 {
                    moved = true;
                }
            }
        }
        match (moved, up, down) {
            (false, _, _) => Monotonicity::Constant,
            (true, true, _) => Monotonicity::NonDecreasing,
            (true, false, true) => Monotonicity::NonIncreasing,
            _ => Monotonicity::Neither,
        }
    }

    /// Class and perturbation weight at `t` (no range check).
    #[inline]
    pub fn slice(&self, t: f64) -> OmegaSlice {
        OmegaSlice { class: self.schedule.class_at(t), tau: self.perturbation.as_ref().map_or(0.0, |p| p.time.eval(t)) }
    }

    #[inline]
    pub fn node(&self, sl: &OmegaSlice, idx: usize) -> HermMat {
        match &self.perturbation {
            None => sl.class,
            Some(p) => sl.class + sl.tau * p.shape.at(idx),
        }
    }

    pub fn check_time(&self, t: f64) -> Result<(), BackgroundError> {
        let slack = 1e-9 * (1.0 + self.horizon);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(BackgroundError::OutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// `ω_t` as a field: class value plus perturbation at every node.
    pub fn omega_at(&self, t: f64) -> Result<HermitianField, BackgroundError> {
        self.check_time(t)?;
        let sl = self.slice(t);
        let mats = (0..self.grid.len()).map(|i| self.node(&sl, i)).collect();
        Ok(HermitianField::from_mats(self.grid, mats).expect("grid length"))
    }

    /// `ε(t) = max(0, 1 − λ_min(ω₀^{-1}ω_t))` over nodes.
    pub fn epsilon_at(&self, t: f64) -> f64 {
        let n = self.n();
        let (s0, st) = (self.slice(0.0), self.slice(t));
        let nodes = self.perturbation.as_ref().map_or(1, |p| p.shape.mats().len());
        let mut worst: f64 = 0.0;
        for i in 0..nodes {
            let (lo, _) = self.node(&st, i).generalized_eigenvalues(&self.node(&s0, i), n);
            worst = worst.max(1.0 - lo);
        }
        if worst < 1e-14 {
            0.0
        } else {
            worst
        }
    }

    /// Same family after the change of time variable with rate `α`: class
    /// and perturbation are multiplied by `1 + α(s−s₀)`; bounds are
    /// re-derived on the new horizon.
    pub fn retimed(&self, retime: Retime, horizon: f64) -> Result<Self, BackgroundError> {
        let pert = self.perturbation.as_ref().map(|p| Perturbation {
            label: format!("{}_retimed", p.label),
            shape: p.shape.clone(),
            time: TimeFn::Retimed { inner: Box::new(p.time.clone()), retime, power: 1 },
        });
        Self::new(self.grid, self.schedule.retimed(retime), pert, None, None, horizon)
    }
}

/// Smallest `E ≥ 0` with `(1−E)ω_t ⪯ ω_{t'} ⪯ (1+E)ω_t` over sampled pairs
/// `t ∈ [0, T−2ε]`, `|t'−t| < ε`. Returns `+∞` if some `ω_t` is degenerate.
///
/// `t` runs over `per_unit` samples per unit time; `t'` over 15 points
/// strictly inside `(t−ε, t+ε)`.
pub fn regularity_modulus(fam: &BackgroundFamily, eps: f64, per_unit: usize) -> Result<f64, BackgroundError> {
    let horizon = fam.horizon;
    if !(eps > 0.0 && eps < 0.5 * horizon) {
        return Err(BackgroundError::Window { eps, horizon });
    }
    let n = fam.n();
    let nodes = fam.perturbation.as_ref().map_or(1, |p| p.shape.mats().len());
    let inner = 8;
    let mut e: f64 = 0.0;
    for t in sample_times(horizon - 2.0 * eps, per_unit) {
        let base = fam.slice(t);
        for j in -(inner - 1)..inner {
            let tp = t + eps * j as f64 / inner as f64;
            if !(0.0..=horizon).contains(&tp) || j == 0 {
                continue;
            }
            let other = fam.slice(tp);
            for i in 0..nodes {
                let w = fam.node(&base, i);
                if w.min_eigenvalue(n) <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                let (lo, hi) = fam.node(&other, i).generalized_eigenvalues(&w, n);
                e = e.max(hi - 1.0).max(1.0 - lo);
            }
        }
    }
    Ok(e)
}

/// Outcome of the very-regular search.
#[derive(Clone, Debug, PartialEq)]
pub struct VeryRegularReport {
    pub pass: bool,
    pub eta: f64,
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Tight pointwise `ε(t)` on the default time grid; passes when
/// `ε(0) = 0` and `sup ε < 1`, with `η = 1 − sup ε`.
pub fn very_regular_check(fam: &BackgroundFamily) -> VeryRegularReport {
    let times = sample_times(fam.horizon, SAMPLES_PER_UNIT);
    let eps: Vec<f64> = times.iter().map(|&t| fam.epsilon_at(t)).collect();
    let sup = eps.iter().copied().fold(0.0, f64::max);
    VeryRegularReport { pass: eps[0] == 0.0 && sup < 1.0, eta: 1.0 - sup, times, eps }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> TorusGrid {
        TorusGrid::new(1, 8).unwrap()
    }

    #[test]
    fn nkrf_endpoints() {
        let (a, b) = (HermMat::diag(2.0, 1.0), HermMat::diag(-1.0, 1.0));
        let s = ClassSchedule::nkrf(2, a, b).unwrap();
        assert_eq!(s.class_at(0.0), a);
        let far = s.class_at(40.0);
        assert!((far - b).max_abs_entry() <= (-40.0f64).exp() * (a - b).max_abs_entry() * 1.0001);
    }

    #[test]
    fn krf_midpoint() {
        let s = ClassSchedule::krf(2, HermMat::identity(2), HermMat::scalar(2, -1.0)).unwrap();
        assert_eq!(s.class_at(0.5), HermMat::scalar(2, 0.5));
        assert!((t_max(&s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn t_max_log3_and_infinity() {
        let s = ClassSchedule::nkrf(2, HermMat::diag(2.0, 1.0), HermMat::diag(-1.0, 1.0)).unwrap();
        assert!((t_max(&s) - 3.0f64.ln()).abs() < 1e-8);
        let pd = ClassSchedule::nkrf(2, HermMat::diag(2.0, 1.0), HermMat::diag(0.5, 3.0)).unwrap();
        assert!(t_max(&pd).is_infinite());
        let slow = ClassSchedule::krf(1, HermMat::scalar(1, 1.0), HermMat::scalar(1, -1e-3)).unwrap();
        assert!((t_max(&slow) - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn initial_class_must_be_positive() {
        assert_eq!(
            ClassSchedule::nkrf(1, HermMat::scalar(1, -1.0), HermMat::ZERO),
            Err(BackgroundError::NotPositiveDefinite("initial class"))
        );
    }

    #[test]
    fn bounds_are_derived_and_checked() {
        let s = ClassSchedule::nkrf(1, HermMat::scalar(1, 2.0), HermMat::scalar(1, 1.0)).unwrap();
        let f = BackgroundFamily::new(g(), s.clone(), None, None, None, 1.0).unwrap();
        assert!((f.big_theta.d0 - 2.0).abs() < 1e-15);
        assert!((f.theta.d0 - (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(f.monotonicity, Monotonicity::NonIncreasing);
        let bad = BackgroundFamily::new(g(), s, None, Some(HermMat::scalar(1, 1.9)), None, 1.0);
        assert!(matches!(bad, Err(BackgroundError::Bound { .. })));
    }

    #[test]
    fn omega_at_range_and_perturbation() {
        let p = Perturbation::cosine_bump(g(), 0.01, 1, 2.0);
        let s = ClassSchedule::constant(1, HermMat::scalar(1, 1.0)).unwrap();
        let f = BackgroundFamily::new(g(), s, Some(p), None, None, 1.0).unwrap();
        assert!(f.omega_at(1.5).is_err());
        let w = f.omega_at(0.0).unwrap();
        let x0 = w.at(0).d0;
        assert!((x0 - (1.0 - std::f64::consts::PI.powi(2) * 0.01)).abs() < 1e-12);
        assert_eq!(f.monotonicity, Monotonicity::Neither);
    }

    #[test]
    fn very_regular_examples() {
        let konst = BackgroundFamily::constant(g(), HermMat::scalar(1, 3.0), 1.0).unwrap();
        let r = very_regular_check(&konst);
        assert!(r.pass && r.eta == 1.0);

        let s = ClassSchedule::nkrf(1, HermMat::scalar(1, 1.0), HermMat::scalar(1, 0.5)).unwrap();
        let f = BackgroundFamily::new(g(), s, None, None, None, 3.0).unwrap();
        let r = very_regular_check(&f);
        for (t, e) in r.times.iter().zip(&r.eps) {
            assert!((e - 0.5 * (1.0 - (-t).exp())).abs() < 1e-12);
        }
        assert!(r.pass && r.eta >= 0.5);

        let s = ClassSchedule::krf(1, HermMat::scalar(1, 1.0), HermMat::scalar(1, -1.0)).unwrap();
        let f = BackgroundFamily::new(g(), s, None, None, None, 0.9).unwrap();
        let r = very_regular_check(&f);
        assert!(r.pass && (r.eta - 0.1).abs() < 1e-12);
    }

    #[test]
    fn regularity_examples() {
        let konst = BackgroundFamily::constant(g(), HermMat::scalar(1, 3.0), 2.0).unwrap();
        assert_eq!(regularity_modulus(&konst, 0.1, 64).unwrap(), 0.0);
        let jump = ClassSchedule::scaled(1, HermMat::scalar(1, 1.0), TimeFn::Step { at: 1.0, jump: 1.0 }).unwrap();
        let f = BackgroundFamily::new(g(), jump, None, None, None, 2.0).unwrap();
        assert!(regularity_modulus(&f, 0.1, 64).unwrap() >= 1.0 - 1e-12);
        assert!(regularity_modulus(&f, 1.5, 64).is_err());
    }

    #[test]
    fn retime_roundtrip() {
        let r = Retime::new(0.7, 0.2, 1.0).unwrap();
        for t in [0.2, 0.5, 2.0] {
            assert!((r.t_of_s(r.s_of_t(t)) - t).abs() < 1e-13);
        }
        assert!(Retime::new(0.0, 0.0, 0.0).is_err());
    }
}
