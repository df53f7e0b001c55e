//! Space-time fields fed to the certificate checks.

use crate::grid::{complex_hessian, HermitianField, ScalarField, SnapshotStats, TorusGrid, Trajectory, TrajectoryMeta};
use crate::herm::HermMat;
use std::fmt;
use std::sync::Arc;

/// Value, time derivative and complex Hessian at every node.
#[derive(Clone, Debug)]
pub struct FieldSlice {
    pub value: Vec<f64>,
    pub dt: Vec<f64>,
    pub hess: Vec<HermMat>,
}

pub trait SpaceTime: Sync {
    fn grid(&self) -> &TorusGrid;
    fn slice(&self, t: f64) -> FieldSlice;
}

/// Scalar `a(t)` with its derivative, both closed form.
#[derive(Clone)]
pub struct Profile {
    label: String,
    f: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.label)
    }
}

impl Profile {
    /// `f` returns `(a(t), a'(t))`.
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Profile { label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| (c, 0.0))
    }

    /// `a + b·t`
    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(format!("{a}+{b}t"), move |t| (a + b * t, b))
    }

    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        (self.f)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// `u(t, x) = Σ a_k(t)·S_k(x) + c(t)` with closed-form time derivatives.
#[derive(Clone, Debug)]
pub struct BarrierField {
    pub label: String,
    grid: TorusGrid,
    terms: Vec<(Profile, ScalarField, HermitianField)>,
    offset: Profile,
}

impl BarrierField {
    pub fn new(label: impl Into<String>, grid: TorusGrid, terms: Vec<(Profile, ScalarField)>, offset: Profile) -> Self {
        let terms = terms
            .into_iter()
            .map(|(p, s)| {
                assert_eq!(s.grid(), &grid, "barrier term on a different grid");
                let h = complex_hessian(&s);
                (p, s, h)
            })
            .collect();
        BarrierField { label: label.into(), grid, terms, offset }
    }

    pub fn constant_in_time(label: impl Into<String>, s: ScalarField) -> Self {
        let g = *s.grid();
        Self::new(label, g, vec![(Profile::constant(1.0), s)], Profile::constant(0.0))
    }

    /// `u(t, ·)`.
    pub fn value_at(&self, t: f64) -> ScalarField {
        let mut v = vec![self.offset.eval(t).0; self.grid.len()];
        for (p, s, _) in &self.terms {
            let a = p.eval(t).0;
            v.iter_mut().zip(s.values()).for_each(|(o, x)| *o += a * x);
        }
        ScalarField::from_raw(self.grid, v)
    }

    /// Samples the field at `times` (which must start at 0).
    pub fn sample(&self, times: &[f64]) -> Trajectory {
        assert!(times.first() == Some(&0.0), "sample times start at 0");
        let meta = TrajectoryMeta { problem_id: self.label.clone(), config_digest: String::new() };
        let mut traj = Trajectory::new(self.value_at(0.0), meta);
        for &t in &times[1..] {
            traj.push(t, self.value_at(t), SnapshotStats::default());
        }
        traj
    }
}

impl SpaceTime for BarrierField {
    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn slice(&self, t: f64) -> FieldSlice {
        let len = self.grid.len();
        let (c, dc) = self.offset.eval(t);
        let mut value = vec![c; len];
        let mut dt = vec![dc; len];
        let mut hess = vec![HermMat::ZERO; len];
        for (p, s, h) in &self.terms {
            let (a, da) = p.eval(t);
            for i in 0..len {
                let x = s.values()[i];
                value[i] += a * x;
                dt[i] += da * x;
                hess[i] = hess[i] + a * h.at(i);
            }
        }
        FieldSlice { value, dt, hess }
    }
}

/// A trajectory read as a space-time field: time derivatives by centered
/// differences between neighboring snapshots (one-sided at the ends).
/// `slice` only accepts snapshot times.
pub struct SampledTrajectory<'a> {
    pub traj: &'a Trajectory,
}

impl SampledTrajectory<'_> {
    /// Snapshot times after 0.
    pub fn times(&self) -> Vec<f64> {
        self.traj.times[1..].to_vec()
    }
}

impl SpaceTime for SampledTrajectory<'_> {
    fn grid(&self) -> &TorusGrid {
        self.traj.grid()
    }

    fn slice(&self, t: f64) -> FieldSlice {
        let ts = &self.traj.times;
        let k = ts
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .expect("slice time must be a snapshot time");
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(ts.len() - 1));
        let (a, b) = (&self.traj.snapshots[lo], &self.traj.snapshots[hi]);
        let span = ts[hi] - ts[lo];
        let dt = a.values().iter().zip(b.values()).map(|(x, y)| (y - x) / span).collect();
        let s = &self.traj.snapshots[k];
        FieldSlice { value: s.values().to_vec(), dt, hess: complex_hessian(s).mats().to_vec() }
    }
}
