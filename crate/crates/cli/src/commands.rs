//! Subcommand bodies. Each returns `Ok(true)` on success, `Ok(false)` when a
//! check failed, and a classified [`Failure`] otherwise.

use crate::config::{fmt, load, Loaded};
use anyhow::anyhow;
use maflow_core::background::{regularity_modulus, t_max, very_regular_check};
use maflow_core::elliptic::{solve_static, StaticError};
use maflow_core::grid::{read_trajectory, write_snapshot, write_trajectory};
use maflow_core::ma_ops::flow_rhs;
use maflow_core::parabolic::{solve_detailed, ParabolicError};
use maflow_core::report::Table;
use maflow_core::scenarios::{scenario_by_name, ScenarioError, ScenarioParams};
use maflow_core::verify::{
    bounded_envelopes, build_subbarrier, build_superbarrier, check_subsolution, check_supersolution, check_times,
    report_table, CertificateReport, SampledTrajectory, SpaceTime, SubbarrierOptions,
};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Exit 1 for `User`, 2 for `Numerical`.
#[derive(Debug)]
pub enum Failure {
    User(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::User(e) | Failure::Numerical(e) => e,
        }
    }
}

type Outcome = Result<bool, Failure>;

fn user(e: impl Into<anyhow::Error>) -> Failure {
    Failure::User(e.into())
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure::User(e.into().context("writing output"))
}

fn parabolic(e: ParabolicError) -> Failure {
    match e {
        ParabolicError::Problem(_) | ParabolicError::UnknownStepper(_) | ParabolicError::Background(_) => user(e),
        other => Failure::Numerical(other.into()),
    }
}

fn static_err(e: StaticError) -> Failure {
    match e {
        StaticError::NotConverged { .. } => Failure::Numerical(e.into()),
        StaticError::Parabolic(p) => parabolic(p),
        other => user(other),
    }
}

fn scenario_err(e: ScenarioError) -> Failure {
    if e.is_numerical() {
        Failure::Numerical(e.into())
    } else {
        user(e)
    }
}

fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Prints `key = value` lines and writes them as `manifest.csv`.
fn emit(dir: &Path, rows: &[(&str, String)]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut t = Table::new(&["key", "value"]);
    for (k, v) in rows {
        println!("{k} = {v}");
        t.push(vec![k.to_string(), v.clone()]);
    }
    t.write(&dir.join("manifest.csv")).map_err(io)
}

fn loaded(path: Option<&Path>, sets: &[String]) -> Result<Loaded, Failure> {
    load(path, sets).map_err(user)
}

pub fn solve(path: &Path, sets: &[String]) -> Outcome {
    let l = loaded(Some(path), sets)?;
    let c = &l.config;
    let problem = c.flow_problem().map_err(user)?;
    let solver = c.solver().map_err(user)?;
    let run = solve_detailed(&problem, &solver).map_err(parabolic)?;
    let traj = &run.trajectory;
    let dir = c.output.dir.clone();
    write_trajectory(&dir.join("trajectory"), traj).map_err(io)?;
    let final_rhs = flow_rhs(traj.last(), traj.final_time(), &problem, &solver).sup_norm();
    let g = problem.grid();
    emit(
        &dir,
        &[
            ("command", "solve".into()),
            ("config_digest", digest(&l.text)),
            ("n", g.n().to_string()),
            ("m", g.m().to_string()),
            ("horizon", fmt(problem.horizon)),
            ("final_time", fmt(traj.final_time())),
            ("steps", run.steps.to_string()),
            ("dt_min", fmt(run.dt_min)),
            ("dt_max", fmt(run.dt_max)),
            ("floor_activations", run.floor_activations.to_string()),
            ("final_sup_rhs", fmt(final_rhs)),
            ("final_sup_norm", fmt(traj.last().sup_norm())),
            ("snapshots", traj.times.len().to_string()),
        ],
    )?;
    Ok(true)
}

pub fn static_solve(path: &Path, sets: &[String]) -> Outcome {
    let l = loaded(Some(path), sets)?;
    let c = &l.config;
    let p = c.static_problem().map_err(user)?;
    let solver = c.solver().map_err(user)?;
    let s = solve_static(&p, &solver).map_err(static_err)?;
    let dir = c.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(io)?;
    write_snapshot(&dir.join("static.maf"), &s.phi).map_err(io)?;
    emit(
        &dir,
        &[
            ("command", "static".into()),
            ("config_digest", digest(&l.text)),
            ("strategy", s.strategy.into()),
            ("alpha", fmt(p.alpha)),
            ("residual", fmt(s.residual)),
            ("constant", fmt(s.constant)),
            ("iterations", s.iterations.to_string()),
            ("linear_iterations", s.linear_iterations.to_string()),
            ("sup_norm", fmt(s.phi.sup_norm())),
        ],
    )?;
    Ok(true)
}

pub struct VerifyArgs {
    pub config: PathBuf,
    pub field: Option<PathBuf>,
    pub builtin: Option<String>,
    pub kind: String,
    pub tol: Option<f64>,
    pub eps: f64,
}

pub const BUILTINS: [&str; 3] = ["envelopes", "subbarrier", "superbarrier"];

pub fn verify(a: &VerifyArgs, sets: &[String]) -> Outcome {
    let l = loaded(Some(&a.config), sets)?;
    let c = &l.config;
    let problem = c.flow_problem().map_err(user)?;
    let solver = c.solver().map_err(user)?;
    let h = problem.grid().h_max();
    let (want_sub, want_super) = match a.kind.as_str() {
        "sub" => (true, false),
        "super" => (false, true),
        "both" => (true, true),
        other => return Err(user(anyhow!("--kind must be sub, super or both, got {other:?}"))),
    };
    let mut reports: Vec<CertificateReport> = Vec::new();
    match (&a.field, &a.builtin) {
        (Some(dir), None) => {
            let traj = read_trajectory(dir).map_err(user)?;
            if traj.grid() != problem.grid() {
                return Err(user(anyhow!("trajectory grid does not match the configured grid")));
            }
            if traj.times.len() < 2 {
                return Err(user(anyhow!("trajectory needs at least two snapshots for time derivatives")));
            }
            let field = SampledTrajectory { traj: &traj };
            let times = field.times();
            let spacing = traj.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let tol = a.tol.unwrap_or(10.0 * (h * h + spacing));
            let f: &dyn SpaceTime = &field;
            if want_sub {
                reports.push(check_subsolution(f, &problem, &times, tol, None));
            }
            if want_super {
                reports.push(check_supersolution(f, &problem, &times, tol, None));
            }
        }
        (None, Some(name)) => {
            let tol = a.tol.unwrap_or(10.0 * h * h);
            let times = check_times(problem.horizon);
            match name.as_str() {
                "envelopes" => {
                    let env = bounded_envelopes(&problem).map_err(user)?;
                    let g = *problem.grid();
                    if want_sub {
                        reports.push(check_subsolution(&env.lower(g), &problem, &times, tol, None));
                    }
                    if want_super {
                        reports.push(check_supersolution(&env.upper(g), &problem, &times, tol, None));
                    }
                }
                "subbarrier" => {
                    let opts = SubbarrierOptions { tol: Some(tol), ..Default::default() };
                    let b = build_subbarrier(&problem, a.eps, &opts, &solver).map_err(|e| scenario_err(e.into()))?;
                    println!("closeness = {}", b.below_datum && b.within_eps);
                    reports.push(b.report);
                }
                "superbarrier" => {
                    let b =
                        build_superbarrier(&problem, a.eps, Some(tol), &solver).map_err(|e| scenario_err(e.into()))?;
                    println!("closeness = {}", b.above_datum && b.within_eps);
                    reports.push(b.report);
                }
                other => {
                    return Err(user(anyhow!("unknown builtin {other:?} (expected one of {})", BUILTINS.join(", "))))
                }
            }
        }
        _ => return Err(user(anyhow!("give exactly one of a trajectory directory or --builtin"))),
    }
    let table = report_table(&reports);
    print!("{}", table.to_csv_string());
    let dir = &c.output.dir;
    std::fs::create_dir_all(dir).map_err(io)?;
    table.write(&dir.join("certificates.csv")).map_err(io)?;
    Ok(reports.iter().all(|r| r.pass))
}

pub fn scenario(name: &str, path: Option<&Path>, sets: &[String]) -> Outcome {
    let l = loaded(path, sets)?;
    let c = &l.config;
    let params = ScenarioParams {
        m: c.scenario.m,
        horizon: c.scenario.horizon,
        dt: c.scenario.dt,
        solver: if l.has_solver { Some(c.solver().map_err(user)?) } else { None },
    };
    let s = scenario_by_name(name, &params).map_err(scenario_err)?;
    let report = s.run().map_err(scenario_err)?;
    let mut t = Table::new(&["check", "value", "threshold", "result"]);
    for ch in &report.checks {
        t.push(vec![ch.name.clone(), fmt(ch.value), fmt(ch.threshold), if ch.pass { "PASS" } else { "FAIL" }.into()]);
    }
    print!("{}", t.to_csv_string());
    report.write(&c.output.dir.join(name)).map_err(io)?;
    println!("{name}: {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(report.passed())
}

pub fn cohomology(path: &Path, sets: &[String]) -> Outcome {
    let l = loaded(Some(path), sets)?;
    let c = &l.config;
    let schedule = c.schedule().map_err(user)?;
    let tm = t_max(&schedule);
    println!("T_max = {}", if tm.is_infinite() { "infinity".to_string() } else { fmt(tm) });
    let horizon = c.cohomology.horizon.min(0.99 * tm);
    let g = c.grid().map_err(user)?;
    let fam = c.family(g, horizon).map_err(user)?;
    println!("horizon = {}", fmt(horizon));
    let mut t = Table::new(&["eps", "E"]);
    for &eps in &c.cohomology.eps {
        let e = regularity_modulus(&fam, eps, 64).map_err(user)?;
        t.push(vec![fmt(eps), fmt(e)]);
    }
    print!("{}", t.to_csv_string());
    let vr = very_regular_check(&fam);
    println!("very_regular = {}", vr.pass);
    println!("eta = {}", fmt(vr.eta));
    let dir = &c.output.dir;
    std::fs::create_dir_all(dir).map_err(io)?;
    t.write(&dir.join("regularity.csv")).map_err(io)?;
    let mut m = Table::new(&["key", "value"]);
    m.push(vec!["t_max".into(), fmt(tm)]);
    m.push(vec!["horizon".into(), fmt(horizon)]);
    m.push(vec!["very_regular".into(), vr.pass.to_string()]);
    m.push(vec!["eta".into(), fmt(vr.eta)]);
    m.write(&dir.join("manifest.csv")).map_err(io)?;
    Ok(true)
}
