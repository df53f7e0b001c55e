//! Snapshot files, CSV exports and trajectories.
//!
//! Binary layout (little-endian): magic `MAF1`, `u32 n`, `u32 m`,
//! `f64 periods[2n]`, then `f64` values in row-major node order.

use super::{mean, GridError, ScalarField, TorusGrid};
use crate::report::fmt9;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MAF1";

pub fn write_snapshot(path: &Path, field: &ScalarField) -> Result<(), GridError> {
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&(g.m() as u32).to_le_bytes())?;
    for p in g.periods() {
        w.write_all(&p.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<ScalarField, GridError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(GridError::Format(format!("{}: missing MAF1 header", path.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n, m) = (u32_at(4), u32_at(8));
    if n != 1 && n != 2 {
        return Err(GridError::Dimension(n));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let header = 12 + 16 * n;
    if bytes.len() < header {
        return Err(GridError::Format("truncated header".into()));
    }
    let periods: Vec<f64> = (0..2 * n).map(|a| f64_at(12 + 8 * a)).collect();
    let g = TorusGrid::with_periods(n, m, &periods)?;
    let expected = header + 8 * g.len();
    if bytes.len() != expected {
        return Err(GridError::Format(format!("expected {expected} bytes for n={n}, m={m}, found {}", bytes.len())));
    }
    let values = (0..g.len()).map(|i| f64_at(header + 8 * i)).collect();
    ScalarField::from_values(g, values)
}

/// CSV with one index column per real axis, then the value.
pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<(), GridError> {
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    let cols: Vec<String> = (0..g.dims()).map(|a| format!("i{a}")).collect();
    writeln!(w, "{},value", cols.join(","))?;
    for (i, v) in field.values().iter().enumerate() {
        let c = g.coords(i);
        for ca in c.iter().take(g.dims()) {
            write!(w, "{ca},")?;
        }
        writeln!(w, "{}", fmt9(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-snapshot solver diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SnapshotStats {
    /// Floor activations accumulated since `t = 0`.
    pub floor_activations: u64,
    /// `max |rhs|` evaluated at this snapshot's state.
    pub max_abs_rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryMeta {
    pub problem_id: String,
    pub config_digest: String,
}

/// Time-indexed snapshots of a potential.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub stats: Vec<SnapshotStats>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(phi0: ScalarField, meta: TrajectoryMeta) -> Self {
        Trajectory { times: vec![0.0], snapshots: vec![phi0], stats: vec![SnapshotStats::default()], meta }
    }

    /// Appends a snapshot; `t` must exceed the last time.
    pub fn push(&mut self, t: f64, field: ScalarField, stats: SnapshotStats) {
        assert!(t > *self.times.last().unwrap(), "times must increase strictly");
        self.times.push(t);
        self.snapshots.push(field);
        self.stats.push(stats);
    }

    pub fn grid(&self) -> &TorusGrid {
        self.snapshots[0].grid()
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().unwrap()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Snapshot whose time is within `1e-9` of `t`.
    pub fn at(&self, t: f64) -> Option<&ScalarField> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs())).map(|k| &self.snapshots[k])
    }
}

/// Writes `snap_XXXX.maf` files plus `manifest.csv` into `dir`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), GridError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("manifest.csv"))?);
    writeln!(w, "# problem={} config_digest={}", traj.meta.problem_id, traj.meta.config_digest)?;
    writeln!(w, "index,time,file,sup_norm,mean,floor_activations,max_abs_rhs")?;
    for (k, (t, snap)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
        let file = format!("snap_{k:04}.maf");
        write_snapshot(&dir.join(&file), snap)?;
        let st = traj.stats[k];
        writeln!(
            w,
            "{k},{},{file},{},{},{},{}",
            fmt9(*t),
            fmt9(snap.sup_norm()),
            fmt9(mean(snap)),
            st.floor_activations,
            fmt9(st.max_abs_rhs)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a directory written by [`write_trajectory`].
///
/// Times are re-read from the manifest, which prints 9 significant digits;
/// snapshot values are exact.
pub fn read_trajectory(dir: &Path) -> Result<Trajectory, GridError> {
    let f = BufReader::new(File::open(dir.join("manifest.csv"))?);
    let mut meta = TrajectoryMeta::default();
    let mut times = Vec::new();
    let mut snaps = Vec::new();
    let mut stats = Vec::new();
    for line in f.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            for kv in rest.split_whitespace() {
                if let Some(v) = kv.strip_prefix("problem=") {
                    meta.problem_id = v.to_string();
                } else if let Some(v) = kv.strip_prefix("config_digest=") {
                    meta.config_digest = v.to_string();
                }
            }
            continue;
        }
        if line.starts_with("index") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(GridError::Format(format!("bad manifest row: {line}")));
        }
        let num = |s: &str| -> Result<f64, GridError> {
            s.parse().map_err(|_| GridError::Format(format!("bad number {s:?}")))
        };
        times.push(num(cols[1])?);
        snaps.push(read_snapshot(&dir.join(cols[2]))?);
        stats.push(SnapshotStats {
            floor_activations: cols[5].parse().map_err(|_| GridError::Format(format!("bad count {:?}", cols[5])))?,
            max_abs_rhs: num(cols[6])?,
        });
    }
    if snaps.is_empty() {
        return Err(GridError::Format("empty trajectory".into()));
    }
    if snaps.iter().any(|s| s.grid() != snaps[0].grid()) {
        return Err(GridError::Mismatch);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GridError::Format("times must increase strictly".into()));
    }
    Ok(Trajectory { times, snapshots: snaps, stats, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::with_periods(2, 8, &[1.0, 2.0, 1.0, 0.5]).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 3.1).sin() * x[1] + x[3]);
        let p = dir.path().join("f.maf");
        write_snapshot(&p, &f).unwrap();
        let back = read_snapshot(&p).unwrap();
        assert_eq!(back, f);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"MAF1");
        assert_eq!(bytes.len(), 12 + 32 + 8 * 4096);
    }

    #[test]
    fn corrupted_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.maf");
        std::fs::write(&p, b"MAF1\x01\x00\x00\x00").unwrap();
        assert!(read_snapshot(&p).is_err());
    }

    #[test]
    fn csv_has_index_columns() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(1, 8).unwrap();
        let p = dir.path().join("f.csv");
        write_field_csv(&p, &ScalarField::constant(g, 0.5)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "i0,i1,value");
        assert_eq!(lines.next().unwrap(), "0,0,0.5");
        assert_eq!(text.lines().count(), 65);
    }

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(1, 8).unwrap();
        let meta = TrajectoryMeta { problem_id: "p".into(), config_digest: "abc".into() };
        let mut t = Trajectory::new(ScalarField::zeros(g), meta);
        t.push(0.5, ScalarField::constant(g, 1.0), SnapshotStats { floor_activations: 3, max_abs_rhs: 0.25 });
        write_trajectory(dir.path(), &t).unwrap();
        let back = read_trajectory(dir.path()).unwrap();
        assert_eq!(back, t);
    }
}
