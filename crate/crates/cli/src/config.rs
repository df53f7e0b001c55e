//! TOML run configuration, `--set` overrides and problem assembly.

use anyhow::{anyhow, bail, Context, Result};
use maflow_core::background::{t_max, BackgroundFamily, ClassSchedule, Perturbation, Rule, TimeFn};
use maflow_core::elliptic::StaticProblem;
use maflow_core::grid::trig::TrigSeries;
use maflow_core::grid::{ScalarField, TorusGrid};
use maflow_core::herm::HermMat;
use maflow_core::parabolic::{DensitySpec, DtRule, FlowProblem, ForcingSpec, SolverConfig};
use num_complex::Complex64;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Key reference printed by `--help`.
pub const KEYS: &str = "\
CONFIG KEYS (TOML; every key optional, defaults in brackets)
  grid.n [1]  grid.m [32]  grid.periods [all 1.0, length 2n]
  family.rule [\"constant\"]: constant | nkrf | krf | scaled
  family.A [1.0], family.B [1.0]: scalar s (s*I), [d0, d1] (diagonal)
      or [d0, d1, re, im] (off-diagonal entry re + i*im)
  family.scale: time factor for rule = scaled (see TIME FACTORS)
  family.perturbation: {name = \"cosine_bump\", amplitude, frequency [1], rate [0]}
  density.kind [\"positive\"]: positive | canonical | open_vanishing
  density.f: spatial factor [1.0] (see SERIES)
  density.u: canonical only, log of the vanishing factor (see SERIES)
  density.pole: canonical only, {center = [x, y], weight}; adds weight*log|z1 - c| to u
  density.disc: open_vanishing only, {center = [x, y], radius}; mu = 0 on the disc
  density.time: time factor [one]
  forcing.kind [\"zero\"]: zero | linear;  forcing.alpha [0]  forcing.anchor [0]  forcing.drift [0]
  initial: initial datum phi0 (see SERIES) [0]
  solver.horizon [1.0]  solver.dt_rule [\"cfl\"]: cfl | fixed;  solver.cfl [0.4]  solver.dt
  solver.det_floor [1e-12]  solver.mu_floor [1e-12]  solver.stationarity_tol [1e-6]
  solver.early_stop [false]  solver.max_steps [10000000; static Newton uses min(max_steps, 200)]
  solver.stepper [\"explicit_euler\"]: explicit_euler | backward_euler
  solver.static_strategy [\"newton\"]: newton | flow
  solver.tol_psh [1e-8]  solver.snapshot_times [[]]
  scenario.name  scenario.m  scenario.horizon  scenario.dt
  cohomology.eps [[0.01, 0.03, 0.1]]  cohomology.horizon [1.0, capped at 0.99*T_max]
  output.dir [\"maflow_out\"], overridden by MAFLOW_OUTPUT_DIR

SERIES: {base = c, terms = [{amp, k = [k1, ...], phase = 0}, ...]} meaning
  c + sum amp*cos(2*pi*k.x/L + phase); a bare number is a constant.
TIME FACTORS: {kind = \"one\"} | {kind = \"exp\", rate} | {kind = \"cos\", rate}
  | {kind = \"sine\", amp, freq} | {kind = \"step\", at, jump}";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridCfg,
    pub family: FamilyCfg,
    pub density: DensityCfg,
    pub forcing: ForcingCfg,
    pub initial: Series,
    pub solver: SolverCfg,
    pub scenario: ScenarioCfg,
    pub cohomology: CohomologyCfg,
    pub output: OutputCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub n: usize,
    pub m: usize,
    pub periods: Option<Vec<f64>>,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg { n: 1, m: 32, periods: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatCfg {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl MatCfg {
    pub fn build(&self, n: usize) -> Result<HermMat> {
        match self {
            MatCfg::Scalar(s) => Ok(HermMat::scalar(n, *s)),
            MatCfg::Entries(v) => match (n, v.as_slice()) {
                (1, [d]) => Ok(HermMat::scalar(1, *d)),
                (2, [a, b]) => Ok(HermMat::diag(*a, *b)),
                (2, [a, b, re, im]) => Ok(HermMat::new(*a, *b, Complex64::new(*re, *im))),
                _ => bail!("matrix entries {v:?} do not fit n = {n}"),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyCfg {
    pub rule: String,
    #[serde(rename = "A")]
    pub a: MatCfg,
    #[serde(rename = "B")]
    pub b: MatCfg,
    pub scale: Option<TimeCfg>,
    pub perturbation: Option<PerturbationCfg>,
}

impl Default for FamilyCfg {
    fn default() -> Self {
        FamilyCfg {
            rule: "constant".into(),
            a: MatCfg::Scalar(1.0),
            b: MatCfg::Scalar(1.0),
            scale: None,
            perturbation: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationCfg {
    pub name: String,
    pub amplitude: f64,
    #[serde(default = "one_i32")]
    pub frequency: i32,
    #[serde(default)]
    pub rate: f64,
}

fn one_i32() -> i32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum TimeCfg {
    One,
    Exp { rate: f64 },
    Cos { rate: f64 },
    Sine { amp: f64, freq: f64 },
    Step { at: f64, jump: f64 },
}

impl TimeCfg {
    fn build(&self) -> TimeFn {
        match *self {
            TimeCfg::One => TimeFn::One,
            TimeCfg::Exp { rate } => TimeFn::Exp { rate },
            TimeCfg::Cos { rate } => TimeFn::Cos { rate },
            TimeCfg::Sine { amp, freq } => TimeFn::Sine { amp, freq },
            TimeCfg::Step { at, jump } => TimeFn::Step { at, jump },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Constant(f64),
    Terms(SeriesCfg),
}

impl Default for Series {
    fn default() -> Self {
        Series::Constant(0.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesCfg {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub terms: Vec<TermCfg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermCfg {
    pub amp: f64,
    pub k: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

impl Series {
    pub fn trig(&self) -> Result<(f64, TrigSeries)> {
        match self {
            Series::Constant(c) => Ok((*c, TrigSeries::new())),
            Series::Terms(s) => {
                let mut t = TrigSeries::new();
                for term in &s.terms {
                    if term.k.len() > 4 {
                        bail!("wave vector {:?} has more than 4 entries", term.k);
                    }
                    let mut k = [0; 4];
                    k[..term.k.len()].copy_from_slice(&term.k);
                    t = t.term(term.amp, k, term.phase);
                }
                Ok((s.base, t))
            }
        }
    }

    pub fn sample(&self, g: TorusGrid) -> Result<ScalarField> {
        let (c, t) = self.trig()?;
        Ok(t.sample(g).add_scalar(c))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityCfg {
    pub kind: String,
    pub f: Series,
    pub u: Series,
    pub pole: Option<PoleCfg>,
    pub disc: Option<DiscCfg>,
    pub time: Option<TimeCfg>,
}

impl Default for DensityCfg {
    fn default() -> Self {
        DensityCfg {
            kind: "positive".into(),
            f: Series::Constant(1.0),
            u: Series::Constant(0.0),
            pole: None,
            disc: None,
            time: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleCfg {
    pub center: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscCfg {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingCfg {
    pub kind: String,
    pub alpha: f64,
    pub anchor: f64,
    pub drift: f64,
}

impl Default for ForcingCfg {
    fn default() -> Self {
        ForcingCfg { kind: "zero".into(), alpha: 0.0, anchor: 0.0, drift: 0.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverCfg {
    pub horizon: f64,
    pub dt_rule: String,
    pub cfl: f64,
    pub dt: Option<f64>,
    pub det_floor: f64,
    pub mu_floor: f64,
    pub stationarity_tol: f64,
    pub early_stop: bool,
    pub max_steps: usize,
    pub stepper: String,
    pub static_strategy: String,
    pub tol_psh: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for SolverCfg {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverCfg {
            horizon: 1.0,
            dt_rule: "cfl".into(),
            cfl: 0.4,
            dt: None,
            det_floor: d.det_floor,
            mu_floor: d.mu_floor,
            stationarity_tol: d.stationarity_tol,
            early_stop: d.early_stop,
            max_steps: d.max_steps,
            stepper: d.stepper,
            static_strategy: d.static_strategy,
            tol_psh: d.tol_psh,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioCfg {
    pub name: Option<String>,
    pub m: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohomologyCfg {
    pub eps: Vec<f64>,
    pub horizon: f64,
}

impl Default for CohomologyCfg {
    fn default() -> Self {
        CohomologyCfg { eps: vec![0.01, 0.03, 0.1], horizon: 1.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: PathBuf,
}

impl Default for OutputCfg {
    fn default() -> Self {
        OutputCfg { dir: "maflow_out".into() }
    }
}

/// Parses a `--set` value as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {assignment:?}"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed key {key:?}");
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("key {p:?} in {key:?} is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// The effective configuration with its canonical TOML text.
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
    /// Whether the file or overrides mention `[solver]`.
    pub has_solver: bool,
}

pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Loaded> {
    let mut root = match path {
        Some(p) => {
            let src = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            src.parse::<toml::Table>().with_context(|| format!("parsing {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        apply_override(&mut root, s)?;
    }
    let has_solver = root.contains_key("solver");
    let text = toml::to_string(&root)?;
    let mut config: RunConfig =
        toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
    if let Ok(dir) = std::env::var("MAFLOW_OUTPUT_DIR") {
        config.output.dir = dir.into();
    }
    Ok(Loaded { config, text, has_solver })
}

fn periodic_dist(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b).rem_euclid(l);
    d.min(l - d)
}

impl RunConfig {
    pub fn grid(&self) -> Result<TorusGrid> {
        let g = match &self.grid.periods {
            Some(p) => TorusGrid::with_periods(self.grid.n, self.grid.m, p)?,
            None => TorusGrid::new(self.grid.n, self.grid.m)?,
        };
        Ok(g)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let dt_rule = match s.dt_rule.as_str() {
            "cfl" => DtRule::Cfl { c: s.cfl },
            "fixed" => DtRule::Fixed(s.dt.ok_or_else(|| anyhow!("solver.dt_rule = \"fixed\" needs solver.dt"))?),
            other => bail!("unknown solver.dt_rule {other:?} (expected cfl or fixed)"),
        };
        Ok(SolverConfig {
            dt_rule,
            det_floor: s.det_floor,
            mu_floor: s.mu_floor,
            snapshot_times: s.snapshot_times.clone(),
            stationarity_tol: s.stationarity_tol,
            early_stop: s.early_stop,
            max_steps: s.max_steps,
            stepper: s.stepper.clone(),
            static_strategy: s.static_strategy.clone(),
            tol_psh: s.tol_psh,
        })
    }

    pub fn schedule(&self) -> Result<ClassSchedule> {
        let n = self.grid.n;
        let f = &self.family;
        let (a, b) = (f.a.build(n)?, f.b.build(n)?);
        let s = match f.rule.as_str() {
            "constant" => ClassSchedule::constant(n, a)?,
            "nkrf" => ClassSchedule::nkrf(n, a, b)?,
            "krf" => ClassSchedule::krf(n, a, b)?,
            "scaled" => {
                let tf = f.scale.as_ref().ok_or_else(|| anyhow!("family.rule = \"scaled\" needs family.scale"))?;
                ClassSchedule::new(n, a, b, Rule::Scaled(tf.build()))?
            }
            other => bail!("unknown family.rule {other:?} (expected constant, nkrf, krf or scaled)"),
        };
        Ok(s)
    }

    /// Rejects horizons at or beyond the extinction time of the schedule.
    pub fn family(&self, g: TorusGrid, horizon: f64) -> Result<BackgroundFamily> {
        let schedule = self.schedule()?;
        let tm = t_max(&schedule);
        if horizon >= tm {
            bail!("horizon T = {} is not below T_max = {} of the class schedule", fmt(horizon), fmt(tm));
        }
        let pert = match &self.family.perturbation {
            Some(p) => Some(Perturbation::from_catalog(&p.name, g, p.amplitude, p.frequency, p.rate)?),
            None => None,
        };
        Ok(BackgroundFamily::new(g, schedule, pert, None, None, horizon)?)
    }

    pub fn density(&self, g: TorusGrid) -> Result<DensitySpec> {
        let d = &self.density;
        let time = d.time.as_ref().map_or(TimeFn::One, TimeCfg::build);
        let f = d.f.sample(g)?;
        let spec = match d.kind.as_str() {
            "positive" => DensitySpec::positive(f, time)?,
            "canonical" => {
                let mut u = d.u.sample(g)?.into_values();
                if let Some(pole) = &d.pole {
                    let p = g.periods();
                    for (i, v) in u.iter_mut().enumerate() {
                        let x = g.position(i);
                        let r =
                            periodic_dist(x[0], pole.center[0], p[0]).hypot(periodic_dist(x[1], pole.center[1], p[1]));
                        *v += pole.weight * r.ln();
                    }
                }
                DensitySpec::canonical_from_u(g, &u, f, time)?
            }
            "open_vanishing" => {
                let disc =
                    d.disc.as_ref().ok_or_else(|| anyhow!("density.kind = \"open_vanishing\" needs density.disc"))?;
                let p = g.periods();
                let mask = (0..g.len())
                    .map(|i| {
                        let x = g.position(i);
                        periodic_dist(x[0], disc.center[0], p[0]).hypot(periodic_dist(x[1], disc.center[1], p[1]))
                            < disc.radius
                    })
                    .collect();
                DensitySpec::open_vanishing(f, mask, time)?
            }
            other => bail!("unknown density.kind {other:?} (expected positive, canonical or open_vanishing)"),
        };
        Ok(spec)
    }

    pub fn forcing(&self) -> Result<ForcingSpec> {
        let f = &self.forcing;
        match f.kind.as_str() {
            "zero" => Ok(ForcingSpec::zero()),
            "linear" => Ok(ForcingSpec::Linear { alpha: f.alpha, anchor: f.anchor, drift: f.drift }),
            other => bail!("unknown forcing.kind {other:?} (expected zero or linear)"),
        }
    }

    pub fn flow_problem(&self) -> Result<FlowProblem> {
        let g = self.grid()?;
        let t = self.solver.horizon;
        let fam = self.family(g, t)?;
        let phi0 = self.initial.sample(g)?;
        Ok(FlowProblem::with_tolerance("cli", fam, self.density(g)?, self.forcing()?, phi0, t, self.solver.tol_psh)?)
    }

    /// The static problem on `ω_0` with `α = forcing.alpha`.
    pub fn static_problem(&self) -> Result<StaticProblem> {
        let g = self.grid()?;
        if self.forcing.kind != "linear" && self.forcing.kind != "zero" {
            bail!("static solves need forcing.kind = linear or zero");
        }
        let alpha = if self.forcing.kind == "zero" { 0.0 } else { self.forcing.alpha };
        let fam = self.family(g, self.solver.horizon)?;
        Ok(StaticProblem::new(fam.omega_at(0.0)?, self.density(g)?, alpha)?)
    }
}

pub fn fmt(x: f64) -> String {
    maflow_core::report::fmt9(x)
}
