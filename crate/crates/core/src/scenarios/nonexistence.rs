use super::{digest_of, Check, Scenario, ScenarioError, ScenarioReport};
use crate::background::{BackgroundFamily, TimeFn};
use crate::grid::{fft_forward, fft_inverse, sup_norm_diff, wavenumbers, ScalarField, TorusGrid, Trajectory};
use crate::herm::HermMat;
use crate::parabolic::{solve, DensitySpec, DtRule, FlowProblem, ForcingSpec, SolverConfig};
use crate::report::{fmt9, Table};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Density vanishing on a disc `D` for the whole run, with either a bump
/// `φ₀` (psh but not maximal on `D`) or a datum maximal on `D`.
///
/// Measures `g(t, m) = sup_D |φ_t − φ₀|` at `t ∈ {δ/8, δ/4, δ/2}` across
/// resolutions. Runs use backward Euler: where `μ = 0` the explicit stable
/// step collapses to the determinant floor.
#[derive(Clone, Debug)]
pub struct Nonexistence {
    pub resolutions: Vec<usize>,
    pub delta: f64,
    pub class: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub bump_amp: f64,
    /// Backward Euler step as a fraction of `δ`.
    pub dt_fraction: f64,
    /// `g(δ/8)` must stay above `floor_fraction·bump_amp`.
    pub floor_fraction: f64,
    /// Determinant and density floor. Where `μ = 0` the discrete flow climbs
    /// until `det` reaches it; at the default `1e-12` Newton stalls on the
    /// kink of `log max(det, floor)`.
    pub floor: f64,
    pub config: SolverConfig,
}

/// `resolution` is the finest grid; the sweep halves it twice.
pub fn scenario_nonexistence(resolution: usize, delta: f64) -> Nonexistence {
    Nonexistence {
        resolutions: vec![resolution / 4, resolution / 2, resolution],
        delta,
        class: 1.0,
        center: [0.5, 0.5],
        radius: 0.15,
        bump_amp: 0.005,
        dt_fraction: 1.0 / 64.0,
        floor_fraction: 0.1,
        floor: 1e-6,
        config: SolverConfig::default(),
    }
}

fn periodic_dist(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b).rem_euclid(l);
    d.min(l - d)
}

/// Solves `¼Δ_h φ = rhs` (mean-zero `rhs`) with the 5-point symbol.
fn poisson(g: TorusGrid, rhs: &[f64]) -> Result<ScalarField, ScenarioError> {
    let mut data: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&g, &mut data);
    let sym: Vec<Vec<f64>> = (0..g.dims())
        .map(|a| wavenumbers(&g, a).iter().map(|k| 0.25 * (2.0 * (k * g.h(a)).cos() - 2.0) / g.h(a).powi(2)).collect())
        .collect();
    for (i, z) in data.iter_mut().enumerate() {
        let c = g.coords(i);
        let s: f64 = (0..g.dims()).map(|a| sym[a][c[a]]).sum();
        *z = if i == 0 { Complex64::new(0.0, 0.0) } else { *z / s };
    }
    fft_inverse(&g, &mut data);
    Ok(ScalarField::from_values(g, data.iter().map(|z| z.re).collect())?)
}

impl Nonexistence {
    pub fn disc(&self, g: TorusGrid) -> Vec<bool> {
        let p = g.periods();
        (0..g.len())
            .map(|i| {
                let x = g.position(i);
                let dx = periodic_dist(x[0], self.center[0], p[0]);
                let dy = periodic_dist(x[1], self.center[1], p[1]);
                (dx * dx + dy * dy).sqrt() < self.radius
            })
            .collect()
    }

    /// `a·cos²(πρ/2r)` inside the disc, zero outside.
    pub fn bump(&self, g: TorusGrid) -> ScalarField {
        let (r, a, c) = (self.radius, self.bump_amp, self.center);
        let p = [g.periods()[0], g.periods()[1]];
        ScalarField::from_fn(g, |x| {
            let rho = periodic_dist(x[0], c[0], p[0]).hypot(periodic_dist(x[1], c[1], p[1]));
            if rho < r {
                a * (0.5 * PI * rho / r).cos().powi(2)
            } else {
                0.0
            }
        })
    }

    /// Datum with `ω + dd^cφ₀ = 0` on `D` and `= ω + c` off `D`, together
    /// with the constant `ω + c`.
    pub fn maximal(&self, g: TorusGrid, mask: &[bool]) -> Result<(ScalarField, f64), ScenarioError> {
        let inside = mask.iter().filter(|&&b| b).count();
        let outside = g.len() - inside;
        let lift = self.class * inside as f64 / outside as f64;
        let rhs: Vec<f64> = mask.iter().map(|&d| if d { -self.class } else { lift }).collect();
        Ok((poisson(g, &rhs)?, self.class + lift))
    }

    fn problem(&self, g: TorusGrid, mask: &[bool], phi0: ScalarField, f: f64) -> Result<FlowProblem, ScenarioError> {
        let fam = BackgroundFamily::constant(g, HermMat::scalar(1, self.class), 0.5 * self.delta)?;
        let mu = if mask.iter().any(|&b| b) {
            DensitySpec::open_vanishing(ScalarField::constant(g, f), mask.to_vec(), TimeFn::One)?
        } else {
            DensitySpec::positive(ScalarField::constant(g, f), TimeFn::One)?
        };
        Ok(FlowProblem::new("nonexistence", fam, mu, ForcingSpec::zero(), phi0, 0.5 * self.delta)?)
    }

    fn config(&self) -> SolverConfig {
        let d = self.delta;
        SolverConfig { det_floor: self.floor, mu_floor: self.floor, ..self.config.clone() }
            .with_stepper("backward_euler")
            .with_dt(DtRule::Fixed(self.dt_fraction * d))
            .with_snapshots(vec![d / 8.0, d / 4.0, d / 2.0])
    }

    fn g_series(traj: &Trajectory, mask: &[bool]) -> Vec<f64> {
        let phi0 = traj.snapshots[0].values();
        traj.snapshots[1..]
            .iter()
            .map(|s| {
                s.values()
                    .iter()
                    .zip(phi0)
                    .zip(mask)
                    .filter(|(_, &d)| d)
                    .fold(0.0f64, |m, ((a, b), _)| m.max((a - b).abs()))
            })
            .collect()
    }
}

impl Scenario for Nonexistence {
    fn name(&self) -> &'static str {
        "nonexistence"
    }

    fn run(&self) -> Result<ScenarioReport, ScenarioError> {
        if !(self.delta > 0.0) || self.resolutions.iter().any(|&m| m < 4) {
            return Err(ScenarioError::Parameter("delta must be positive and resolutions at least 4".into()));
        }
        let mut report = ScenarioReport::new(self.name(), digest_of(self));
        let cfg = self.config();
        let mut series = Table::new(&["m", "case", "t", "g"]);
        let mut bump_floor = Vec::new();
        for &m in &self.resolutions {
            let g = TorusGrid::new(1, m)?;
            let mask = self.disc(g);
            let (maximal, f) = self.maximal(g, &mask)?;
            let bump = self.problem(g, &mask, self.bump(g), f)?;
            let ctrl = self.problem(g, &mask, maximal, f)?;
            let runs = [("bump", solve(&bump, &cfg)?), ("maximal", solve(&ctrl, &cfg)?)];
            for (case, traj) in &runs {
                let gs = Self::g_series(traj, &mask);
                for (t, v) in traj.times[1..].iter().zip(&gs) {
                    series.push(vec![m.to_string(), case.to_string(), fmt9(*t), fmt9(*v)]);
                }
                if *case == "bump" {
                    bump_floor.push(gs[0]);
                    report.checks.push(Check::at_least(
                        format!("bump_floor@m={m}"),
                        gs[0],
                        self.floor_fraction * self.bump_amp,
                    ));
                } else {
                    let tol = 10.0 * g.h_max().powi(2);
                    report.checks.push(Check::at_most(
                        format!("maximal_control@m={m}"),
                        gs.iter().copied().fold(0.0, f64::max),
                        tol,
                    ));
                }
            }
            if !mask.iter().any(|&b| b) {
                // Empty D: the vanishing density is the positive one.
                let mut plain = bump.clone();
                plain.mu = DensitySpec::positive(ScalarField::constant(g, f), TimeFn::One)?;
                let d = sup_norm_diff(solve(&plain, &cfg)?.last(), runs[0].1.last())?;
                report.checks.push(Check::at_most(format!("standard_solve@m={m}"), d, 0.0));
            }
        }
        let lo = bump_floor.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = bump_floor.iter().copied().fold(0.0, f64::max);
        let mut spread = Table::new(&["min_g", "max_g", "ratio"]);
        spread.push(vec![fmt9(lo), fmt9(hi), fmt9(lo / hi)]);
        report.series.push(("g".into(), series));
        report.series.push(("floor".into(), spread));
        Ok(report)
    }
}
