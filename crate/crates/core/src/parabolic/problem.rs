//! Cauchy-problem data: density, forcing, solver configuration.

use crate::background::{sample_times, t_max, BackgroundError, BackgroundFamily, TimeFn};
use crate::grid::{complex_hessian, GridError, ScalarField, TorusGrid};
use crate::herm::HermMat;
use sha2::{Digest, Sha256};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOL_PSH: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("density: {0}")]
    Density(String),
    #[error("forcing: {0}")]
    Forcing(String),
    #[error("initial datum is not omega_0-psh: min eigenvalue {eig:.3e} at node {node} (tolerance {tol:.1e})")]
    NotAdmissible { node: usize, eig: f64, tol: f64 },
    #[error("horizon T={horizon} must stay below T_max={t_max}")]
    BeyondTmax { horizon: f64, t_max: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("family horizon {family} shorter than problem horizon {problem}")]
    FamilyHorizon { family: f64, problem: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityKind {
    /// `μ = τ(t)·f(x)` with `f > 0`.
    Positive,
    /// `μ = τ(t)·e^{u(x)}·f(x)` with `e^u ≥ 0` stored directly.
    Canonical,
    /// `μ = τ(t)·f(x)·𝟙_{x∉D}`.
    OpenVanishing,
}

/// Separable density `μ(t, x) = τ(t)·g(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySpec {
    pub kind: DensityKind,
    /// Spatial factor `g`, non-negative.
    spatial: ScalarField,
    exp_u: Option<ScalarField>,
    f: Option<ScalarField>,
    mask: Option<Vec<bool>>,
    pub time: TimeFn,
}

impl DensitySpec {
    pub fn positive(f: ScalarField, time: TimeFn) -> Result<Self, ProblemError> {
        if f.min() <= 0.0 {
            return Err(ProblemError::Density(format!("positive density has minimum {}", f.min())));
        }
        Ok(DensitySpec { kind: DensityKind::Positive, spatial: f.clone(), exp_u: None, f: Some(f), mask: None, time })
    }

    /// `e^u·f` from the stored factor `e^u ≥ 0`.
    pub fn canonical(exp_u: ScalarField, f: ScalarField, time: TimeFn) -> Result<Self, ProblemError> {
        if exp_u.grid() != f.grid() {
            return Err(ProblemError::GridMismatch);
        }
        if exp_u.min() < 0.0 || f.min() <= 0.0 {
            return Err(ProblemError::Density("need e^u >= 0 and f > 0".into()));
        }
        Ok(DensitySpec {
            kind: DensityKind::Canonical,
            spatial: exp_u.zip_map(&f, |a, b| a * b),
            exp_u: Some(exp_u),
            f: Some(f),
            mask: None,
            time,
        })
    }

    /// Canonical density from `u` values that may contain `−∞` markers.
    pub fn canonical_from_u(grid: TorusGrid, u: &[f64], f: ScalarField, time: TimeFn) -> Result<Self, ProblemError> {
        if u.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(ProblemError::Density("u must be finite or -inf".into()));
        }
        let exp_u = ScalarField::from_values(grid, u.iter().map(|v| v.exp()).collect())?;
        Self::canonical(exp_u, f, time)
    }

    /// `f·𝟙_{x∉D}` where `mask[i]` marks membership in `D`.
    pub fn open_vanishing(f: ScalarField, mask: Vec<bool>, time: TimeFn) -> Result<Self, ProblemError> {
        if mask.len() != f.len() {
            return Err(ProblemError::Density("mask length does not match grid".into()));
        }
        if f.min() <= 0.0 {
            return Err(ProblemError::Density("f must be positive".into()));
        }
        let g = ScalarField::from_values(
            *f.grid(),
            f.values().iter().zip(&mask).map(|(&v, &d)| if d { 0.0 } else { v }).collect(),
        )?;
        Ok(DensitySpec {
            kind: DensityKind::OpenVanishing,
            spatial: g,
            exp_u: None,
            f: Some(f),
            mask: Some(mask),
            time,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.spatial.grid()
    }

    pub fn spatial(&self) -> &ScalarField {
        &self.spatial
    }

    pub fn exp_u(&self) -> Option<&ScalarField> {
        self.exp_u.as_ref()
    }

    pub fn f(&self) -> Option<&ScalarField> {
        self.f.as_ref()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.time.is_constant()
    }

    /// `μ(t, x_i)`.
    #[inline]
    pub fn value(&self, t: f64, idx: usize) -> f64 {
        self.time.eval(t) * self.spatial.values()[idx]
    }

    /// `μ(t, ·)` as a field.
    pub fn at(&self, t: f64) -> ScalarField {
        self.spatial.scale(self.time.eval(t))
    }

    /// Replaces the time factor.
    pub fn with_time(&self, time: TimeFn) -> Self {
        DensitySpec { time, ..self.clone() }
    }

    /// Checks that the time factor stays positive and finite on `[0, T]`.
    fn validate(&self, horizon: f64) -> Result<(), ProblemError> {
        for t in sample_times(horizon, 64) {
            let tau = self.time.eval(t);
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(ProblemError::Density(format!("time factor {tau} at t={t}")));
            }
        }
        Ok(())
    }
}

/// Closed-form forcing `F(t, x_i, r)`.
pub type ForcingFn = Arc<dyn Fn(f64, usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ForcingSpec {
    /// `α(r − anchor) + drift·t`
    Linear { alpha: f64, anchor: f64, drift: f64 },
    /// Arbitrary closed form with a declared Lipschitz bound in `r`.
    Tabulated { label: String, f: ForcingFn, lipschitz: f64 },
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingSpec::Linear { alpha, anchor, drift } => {
                f.debug_struct("Linear").field("alpha", alpha).field("anchor", anchor).field("drift", drift).finish()
            }
            ForcingSpec::Tabulated { label, lipschitz, .. } => {
                f.debug_struct("Tabulated").field("label", label).field("lipschitz", lipschitz).finish()
            }
        }
    }
}

impl ForcingSpec {
    pub fn zero() -> Self {
        Self::linear(0.0)
    }

    pub fn linear(alpha: f64) -> Self {
        ForcingSpec::Linear { alpha, anchor: 0.0, drift: 0.0 }
    }

    #[inline]
    pub fn eval(&self, t: f64, idx: usize, r: f64) -> f64 {
        match self {
            ForcingSpec::Linear { alpha, anchor, drift } => alpha * (r - anchor) + drift * t,
            ForcingSpec::Tabulated { f, .. } => f(t, idx, r),
        }
    }

    /// Lipschitz constant `κ` in `r`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ForcingSpec::Linear { alpha, .. } => *alpha,
            ForcingSpec::Tabulated { lipschitz, .. } => *lipschitz,
        }
    }

    /// `α` for linear forcing.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ForcingSpec::Linear { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// Sampled monotonicity and Lipschitz checks.
    pub fn validate(&self, grid: &TorusGrid, horizon: f64, r_range: (f64, f64)) -> Result<(), ProblemError> {
        if let ForcingSpec::Linear { alpha, .. } = self {
            if !(*alpha >= 0.0 && alpha.is_finite()) {
                return Err(ProblemError::Forcing(format!("alpha must be >= 0, got {alpha}")));
            }
            return Ok(());
        }
        let kappa = self.lipschitz();
        let nodes: Vec<usize> = (0..grid.len()).step_by((grid.len() / 64).max(1)).collect();
        let (lo, hi) = (r_range.0 - 1.0, r_range.1 + 1.0);
        let rs: Vec<f64> = (0..=32).map(|k| lo + (hi - lo) * k as f64 / 32.0).collect();
        for t in sample_times(horizon, 16) {
            for &i in &nodes {
                for w in rs.windows(2) {
                    let (a, b) = (self.eval(t, i, w[0]), self.eval(t, i, w[1]));
                    if b < a - 1e-12 {
                        return Err(ProblemError::Forcing(format!("decreasing in r at t={t}, node {i}")));
                    }
                    if (b - a).abs() > kappa * (w[1] - w[0]) * (1.0 + 1e-9) + 1e-12 {
                        return Err(ProblemError::Forcing(format!(
                            "Lipschitz bound {kappa} exceeded at t={t}, node {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One Cauchy problem on `[0, T]`.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub id: String,
    pub family: BackgroundFamily,
    /// Constant form added to `ω_t` (the `εΘ` of vanishing-viscosity runs).
    pub shift: HermMat,
    pub mu: DensitySpec,
    pub forcing: ForcingSpec,
    pub phi0: ScalarField,
    pub horizon: f64,
}

impl FlowProblem {
    pub fn new(
        id: impl Into<String>,
        family: BackgroundFamily,
        mu: DensitySpec,
        forcing: ForcingSpec,
        phi0: ScalarField,
        horizon: f64,
    ) -> Result<Self, ProblemError> {
        Self::with_tolerance(id, family, mu, forcing, phi0, horizon, DEFAULT_TOL_PSH)
    }

    pub fn with_tolerance(
        id: impl Into<String>,
        family: BackgroundFamily,
        mu: DensitySpec,
        forcing: ForcingSpec,
        phi0: ScalarField,
        horizon: f64,
        tol_psh: f64,
    ) -> Result<Self, ProblemError> {
        let p = FlowProblem { id: id.into(), family, shift: HermMat::ZERO, mu, forcing, phi0, horizon };
        p.validate(tol_psh)?;
        Ok(p)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.phi0.grid()
    }

    pub fn n(&self) -> usize {
        self.grid().n()
    }

    /// Copy with `shift` added to the background.
    pub fn shifted(&self, shift: HermMat) -> Self {
        FlowProblem { shift, ..self.clone() }
    }

    pub fn validate(&self, tol_psh: f64) -> Result<(), ProblemError> {
        let g = self.grid();
        if self.family.grid() != g || self.mu.grid() != g {
            return Err(ProblemError::GridMismatch);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ProblemError::Horizon(self.horizon));
        }
        if self.family.horizon < self.horizon * (1.0 - 1e-12) {
            return Err(ProblemError::FamilyHorizon { family: self.family.horizon, problem: self.horizon });
        }
        let tm = t_max(&self.family.schedule);
        if self.horizon >= tm {
            return Err(ProblemError::BeyondTmax { horizon: self.horizon, t_max: tm });
        }
        self.mu.validate(self.horizon)?;
        self.forcing.validate(g, self.horizon, (self.phi0.min(), self.phi0.max()))?;
        let (node, eig) = self.admissibility();
        if eig < -tol_psh {
            return Err(ProblemError::NotAdmissible { node, eig, tol: tol_psh });
        }
        Ok(())
    }

    /// Worst node and smallest eigenvalue of `ω₀ + shift + dd^c φ₀`.
    pub fn admissibility(&self) -> (usize, f64) {
        let h = complex_hessian(&self.phi0);
        let sl = self.family.slice(0.0);
        let n = self.n();
        let mut worst = (0, f64::INFINITY);
        for (i, m) in h.mats().iter().enumerate() {
            let e = (self.family.node(&sl, i) + self.shift + *m).min_eigenvalue(n);
            if e < worst.1 {
                worst = (i, e);
            }
        }
        worst
    }
}

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtRule {
    Fixed(f64),
    /// `dt = c / (W/m_min + κ)` where `W` is the grid's center weight. For
    /// κ = 0 and unit-aspect grids this is `c·h²·m_min`.
    Cfl {
        c: f64,
    },
}

/// Solver knobs shared by the parabolic and static solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt_rule: DtRule,
    pub det_floor: f64,
    pub mu_floor: f64,
    /// Requested snapshot times in `(0, T]`; the horizon is always added.
    pub snapshot_times: Vec<f64>,
    /// Residual threshold for static solves and optional early stop.
    pub stationarity_tol: f64,
    /// Stop a flow once `max |rhs| ≤ stationarity_tol`.
    pub early_stop: bool,
    pub max_steps: usize,
    pub stepper: String,
    pub static_strategy: String,
    pub tol_psh: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_rule: DtRule::Cfl { c: 0.4 },
            det_floor: DEFAULT_FLOOR,
            mu_floor: DEFAULT_FLOOR,
            snapshot_times: Vec::new(),
            stationarity_tol: 1e-6,
            early_stop: false,
            max_steps: 10_000_000,
            stepper: "explicit_euler".into(),
            static_strategy: "newton".into(),
            tol_psh: DEFAULT_TOL_PSH,
        }
    }
}

impl SolverConfig {
    /// Hex SHA-256 of the configuration's debug rendering.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{self:?}").as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_dt(mut self, rule: DtRule) -> Self {
        self.dt_rule = rule;
        self
    }

    pub fn with_stepper(mut self, name: &str) -> Self {
        self.stepper = name.into();
        self
    }
}
