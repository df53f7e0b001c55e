//! Canned experiments. Each scenario runs its member solves, evaluates a
//! list of named checks and returns series and snapshots for the results
//! directory.

mod calabi_yau;
mod canonical;
mod comparison;
mod manufactured;
mod nonexistence;

pub use calabi_yau::{scenario_calabi_yau, CalabiYau};
pub use canonical::{scenario_canonical_model, CanonicalModel};
pub use comparison::{
    catalog, ordered_pair_violations, scenario_comparison_suite, CatalogOutcome, CatalogProblem, ComparisonSuite,
};
pub use manufactured::{manufactured_convergence, ConvergenceRow, ManufacturedStudy};
pub use nonexistence::{scenario_nonexistence, Nonexistence};

use crate::background::BackgroundError;
use crate::elliptic::StaticError;
use crate::grid::{write_snapshot, GridError, ScalarField};
use crate::parabolic::{ParabolicError, ProblemError, SolverConfig};
use crate::report::{fmt9, Table};
use crate::verify::VerifyError;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid scenario parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Static(#[from] StaticError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// True for failures of the numerics rather than of the request.
    pub fn is_numerical(&self) -> bool {
        match self {
            ScenarioError::Parabolic(e) => !matches!(e, ParabolicError::Problem(_) | ParabolicError::UnknownStepper(_)),
            ScenarioError::Static(e) => matches!(e, StaticError::NotConverged { .. } | StaticError::Parabolic(_)),
            ScenarioError::Verify(VerifyError::Bandwidth { .. }) => true,
            _ => false,
        }
    }
}

/// One named check: `pass` iff `value` is on the right side of `threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value >= threshold }
    }

    /// Pass iff `|value − target| ≤ slack·|target|`.
    pub fn relative(name: impl Into<String>, value: f64, target: f64, slack: f64) -> Self {
        Check { name: name.into(), value, threshold: target, pass: (value - target).abs() <= slack * target.abs() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioReport {
    pub name: String,
    pub config_digest: String,
    pub checks: Vec<Check>,
    /// CSV series keyed by file stem.
    pub series: Vec<(String, Table)>,
    pub snapshots: Vec<(String, ScalarField)>,
}

impl ScenarioReport {
    fn new(name: &str, digest: String) -> Self {
        ScenarioReport { name: name.into(), config_digest: digest, ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn series(&self, stem: &str) -> Option<&Table> {
        self.series.iter().find(|(s, _)| s == stem).map(|(_, t)| t)
    }

    /// Manifest table: one row per check.
    pub fn manifest(&self) -> Table {
        let mut t = Table::new(&["scenario", "config_digest", "check", "value", "threshold", "pass"]);
        for c in &self.checks {
            t.push(vec![
                self.name.clone(),
                self.config_digest.clone(),
                c.name.clone(),
                fmt9(c.value),
                fmt9(c.threshold),
                c.pass.to_string(),
            ]);
        }
        t
    }

    /// Writes `manifest.csv`, one CSV per series and `snapshots/*.maf`.
    pub fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        self.manifest().write(&dir.join("manifest.csv"))?;
        for (stem, table) in &self.series {
            table.write(&dir.join(format!("{stem}.csv")))?;
        }
        if !self.snapshots.is_empty() {
            let snap = dir.join("snapshots");
            fs::create_dir_all(&snap)?;
            for (name, field) in &self.snapshots {
                write_snapshot(&snap.join(format!("{name}.maf")), field)?;
            }
        }
        Ok(())
    }
}

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self) -> Result<ScenarioReport, ScenarioError>;
}

/// Overrides applied on top of a scenario's defaults.
#[derive(Clone, Debug, Default)]
pub struct ScenarioParams {
    pub m: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub solver: Option<SolverConfig>,
}

pub fn scenario_names() -> &'static [&'static str] {
    &["calabi_yau", "canonical_model", "nonexistence", "comparison_suite", "flips"]
}

pub fn scenario_by_name(name: &str, params: &ScenarioParams) -> Result<Box<dyn Scenario>, ScenarioError> {
    match name {
        "calabi_yau" => {
            let mut s = scenario_calabi_yau(params.m.unwrap_or(128), params.horizon.unwrap_or(8.0));
            if let Some(dt) = params.dt {
                s.dt = dt;
            }
            if let Some(c) = &params.solver {
                s.config = c.clone();
            }
            Ok(Box::new(s))
        }
        "canonical_model" => {
            let mut s = scenario_canonical_model(params.m.unwrap_or(128), params.horizon.unwrap_or(4.0));
            if let Some(dt) = params.dt {
                s.dt = dt;
            }
            if let Some(c) = &params.solver {
                s.config = c.clone();
            }
            Ok(Box::new(s))
        }
        "nonexistence" => {
            // `horizon` is read as δ; `m` is the finest of the three resolutions.
            let mut s = scenario_nonexistence(params.m.unwrap_or(256), params.horizon.unwrap_or(0.08));
            if let Some(dt) = params.dt {
                s.dt_fraction = dt / s.delta;
            }
            if let Some(c) = &params.solver {
                s.config = c.clone();
            }
            Ok(Box::new(s))
        }
        "comparison_suite" => {
            let mut s = scenario_comparison_suite(params.m.unwrap_or(128));
            if let Some(c) = &params.solver {
                s.config = c.clone();
            }
            Ok(Box::new(s))
        }
        "flips" => Err(ScenarioError::Unsupported("discontinuous density unsupported".into())),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

/// Hex SHA-256 of a debug rendering.
pub(crate) fn digest_of(x: &impl std::fmt::Debug) -> String {
    let mut h = Sha256::new();
    h.update(format!("{x:?}").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Least-squares slope of `log gap` against `t` over `window`, skipping
/// points with `gap < 10·tol`. `None` with fewer than two usable points.
pub fn fit_decay_exponent(times: &[f64], gaps: &[f64], window: (f64, f64), tol: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(gaps)
        .filter(|(&t, &g)| t >= window.0 && t <= window.1 && g >= 10.0 * tol && g > 0.0)
        .map(|(&t, &g)| (t, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / k, sy / k);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `10·(h² + dt)`.
pub(crate) fn discretization_tol(h: f64, dt: f64) -> f64 {
    10.0 * (h * h + dt)
}
