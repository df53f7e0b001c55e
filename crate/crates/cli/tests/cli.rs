use maflow_core::grid::read_snapshot;
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn maflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maflow"))
        .args(args)
        .current_dir(dir)
        .env("MAFLOW_OUTPUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of a `key = value` line.
fn value(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing in {}", stdout(o)))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

const FLAT: &str = "[grid]\nm = 16\n[solver]\nhorizon = 0.1\nsnapshot_times = [0.05]\n";

#[test]
fn flat_solve_is_stationary() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "flat.toml", FLAT);
    let o = maflow(d.path(), &["solve", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(value(&o, "final_sup_rhs").parse::<f64>().unwrap() <= 1e-10);
    assert!(d.path().join("out/manifest.csv").exists());
    assert!(d.path().join("out/trajectory").is_dir());
}

#[test]
fn config_errors_exit_one_and_name_the_problem() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "flat.toml", FLAT);
    let o = maflow(d.path(), &["solve", &cfg, "--set", "grid.mm=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mm"), "{}", stderr(&o));

    let o = maflow(d.path(), &["solve", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1));

    let o = maflow(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

const DEGENERATING: &str = "[grid]\nn = 2\nm = 8\n[family]\nrule = \"nkrf\"\nA = [2.0, 1.0]\nB = [-1.0, 1.0]\n";

#[test]
fn horizon_past_t_max_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "deg.toml", DEGENERATING);
    let o = maflow(d.path(), &["solve", &cfg, "--set", "solver.horizon=2.0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("T_max = 1.09861229"), "{}", stderr(&o));
}

#[test]
fn static_solves() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "flat.toml", FLAT);
    let o = maflow(d.path(), &["static", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(value(&o, "sup_norm"), "0");

    // α = 0 with μ = 1 + ¼Δφ*, φ* = 0.1cos(2πx₁) (mean zero).
    let amp = -0.1 * PI * PI;
    let man = write(
        d.path(),
        "man.toml",
        &format!("[grid]\nm = 128\n[density]\nf = {{ base = 1.0, terms = [{{ amp = {amp:.17}, k = [1] }}] }}\n"),
    );
    let o = maflow(d.path(), &["static", &man]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let phi = read_snapshot(&d.path().join("out/static.maf")).unwrap();
    let g = *phi.grid();
    let err =
        (0..g.len()).map(|i| (phi.values()[i] - 0.1 * (2.0 * PI * g.position(i)[0]).cos()).abs()).fold(0.0, f64::max);
    assert!(err < 5e-3, "{err}");

    let o =
        maflow(d.path(), &["static", &man, "--set", "solver.max_steps=1", "--set", "solver.stationarity_tol=1e-14"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn verify_fields_and_barriers() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "flat.toml", FLAT);
    assert_eq!(maflow(d.path(), &["solve", &cfg]).status.code(), Some(0));
    let o = maflow(d.path(), &["verify", &cfg, "out/trajectory"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches(",true").count(), 2);

    let o = maflow(d.path(), &["verify", &cfg, "--builtin", "envelopes", "--set", "initial=0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // Inflating μ makes the stationary field fail as a subsolution.
    let o = maflow(d.path(), &["verify", &cfg, "out/trajectory", "--kind", "sub", "--set", "density.f=2.0"]);
    assert_eq!(o.status.code(), Some(2));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let worst: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(worst < 0.0, "{row}");

    let o = maflow(d.path(), &["verify", &cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scenarios() {
    let d = tempfile::tempdir().unwrap();
    let o = maflow(d.path(), &["scenario", "calabi_yau"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("calabi_yau: PASS"));
    let manifest = std::fs::read_to_string(d.path().join("out/calabi_yau/manifest.csv")).unwrap();
    assert!(manifest.starts_with("scenario,config_digest,check,value,threshold,pass\n"));

    let o = maflow(d.path(), &["scenario", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let o = maflow(d.path(), &["scenario", "flips"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("discontinuous density unsupported"));
}

#[test]
fn cohomology_reports() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "deg.toml", DEGENERATING);
    let o = maflow(d.path(), &["cohomology", &cfg, "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tm: f64 = value(&o, "T_max").parse().unwrap();
    assert!((tm - 3f64.ln()).abs() < 1e-8);

    let pd = write(d.path(), "pd.toml", "[family]\nrule = \"nkrf\"\nA = 1.0\nB = 2.0\n");
    let o = maflow(d.path(), &["cohomology", &pd]);
    assert_eq!(value(&o, "T_max"), "infinity");

    let flat = write(d.path(), "flat.toml", FLAT);
    let o = maflow(d.path(), &["cohomology", &flat]);
    let rows: Vec<String> =
        stdout(&o).lines().skip_while(|l| *l != "eps,E").skip(1).take(3).map(String::from).collect();
    assert_eq!(rows, ["0.01,0", "0.03,0", "0.1,0"]);
}

#[test]
fn numbers_have_nine_significant_digits() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "deg.toml", DEGENERATING);
    let o = maflow(d.path(), &["cohomology", &cfg]);
    assert_eq!(value(&o, "T_max"), "1.09861229");
}
