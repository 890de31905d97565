//! The fast-flow diffusion `dX = (1/ε)∇̄H(X) dt + dW` and the 2D stochastic
//! PDE driven by the same flow.
//!
//! Paths are advanced by Strang splitting: half a Brownian kick, the exact
//! Hamiltonian flow for time `dt/ε` (RK4 with energy projection), half a
//! kick. Brownian increments are addressed on a fine grid so runs at `dt`
//! and `dt/2` see the same driving path.

mod spde2d;

pub use spde2d::{Grid2d, Spde2d, Spde2dConfig};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coeffs::{average_at, CoefficientTables};
use crate::contour::ContourOptions;
use crate::exec::Exec;
use crate::hamiltonian::{spectral_norm, Hamiltonian};
use crate::reeb::{Label, Reeb};
use crate::rng::NormalStream;
use crate::stats::{Accumulator, Estimate};
use crate::{Error, Point, Result};

/// Paths per work unit; accumulators are merged in unit order.
const CHUNK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastFlowConfig {
    pub eps: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Largest linearised rotation angle per RK4 substep, in radians.
    pub max_rotation: f64,
    /// Each half kick is the sum of `2^noise_refine` fine increments.
    pub noise_refine: u32,
    pub exec: Exec,
}

impl Default for FastFlowConfig {
    fn default() -> Self {
        Self { eps: 0.05, dt: 1e-3, paths: 10_000, seed: 1, max_rotation: 0.1, noise_refine: 0, exec: Exec::Parallel }
    }
}

impl FastFlowConfig {
    /// The same run at `dt/2` on the same Brownian path.
    pub fn halved(&self) -> Result<Self> {
        if self.noise_refine == 0 {
            return Err(Error::Parameter("halving dt needs noise_refine ≥ 1".into()));
        }
        Ok(Self { dt: 0.5 * self.dt, noise_refine: self.noise_refine - 1, ..*self })
    }

    fn fine_dt(&self) -> f64 {
        0.5 * self.dt / f64::from(1u32 << self.noise_refine)
    }
}

/// Smallest tabulated period over all edges.
pub fn min_period(tables: &CoefficientTables, edges: usize) -> f64 {
    (0..edges)
        .flat_map(|k| tables.edge(k).sample_zs().iter().map(move |&z| (k, z)))
        .map(|(k, z)| tables.edge(k).t(z))
        .filter(|t| t.is_finite() && *t > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Largest `dt` allowed at `ε`: `ε · T_min / (4π)`.
pub fn dt_limit(eps: f64, t_min: f64) -> f64 {
    eps * t_min / (4.0 * PI)
}

/// Substep halvings allowed before a drift error.
pub const MAX_HALVINGS: usize = 6;

/// Advances `x` along `ẋ = ∇̄H` for time `tau`.
///
/// Substeps keep `τ_sub · ‖D²H‖ ≤ max_rotation`; after each one the point is
/// pulled back to the starting level by a Newton step along `∇H`. With
/// `check_drift` the pre-projection drift is compared against
/// `1e-6 (1 + |H|)`; the substep is halved until it passes, and a
/// step-size error is returned after [`MAX_HALVINGS`] halvings.
pub fn advect(h: &Hamiltonian, x: Point, tau: f64, max_rotation: f64, check_drift: bool) -> Result<Point> {
    let h0 = h.value(x);
    let limit = 1e-6 * (1.0 + h0.abs());
    let mut x = x;
    let mut left = tau;
    let f = |p: Point| h.skew_gradient(p);
    let rk4 = |x: Point, s: f64| {
        let k1 = f(x);
        let k2 = f([x[0] + 0.5 * s * k1[0], x[1] + 0.5 * s * k1[1]]);
        let k3 = f([x[0] + 0.5 * s * k2[0], x[1] + 0.5 * s * k2[1]]);
        let k4 = f([x[0] + s * k3[0], x[1] + s * k3[1]]);
        [x[0] + s / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]), x[1] + s / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])]
    };
    while left > 0.0 {
        let rate = spectral_norm(h.hessian(x)).max(1e-12);
        let mut s = left.min(max_rotation / rate);
        // Halve the substep until the energy drift is within the limit.
        let mut halvings = 0;
        x = loop {
            let y = rk4(x, s);
            let drift = (h.value(y) - h0).abs();
            if !check_drift || drift <= limit {
                break y;
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::StepSize { drift, limit });
            }
            s *= 0.5;
            halvings += 1;
        };
        for _ in 0..2 {
            let g = h.gradient(x);
            let g2 = g[0] * g[0] + g[1] * g[1];
            if g2 < 1e-24 {
                break;
            }
            let d = (h0 - h.value(x)) / g2;
            x[0] += d * g[0];
            x[1] += d * g[1];
        }
        left -= s;
    }
    Ok(x)
}

/// Brownian increments of one path, addressed by fine-grid index and read
/// through a small block cache.
struct Increments {
    stream: NormalStream,
    block: u64,
    buf: [f64; Self::BLOCK * 2],
}

impl Increments {
    const BLOCK: usize = 32;

    fn new(seed: u64, path: u64) -> Self {
        Self { stream: NormalStream::new(seed, path), block: u64::MAX, buf: [0.0; Self::BLOCK * 2] }
    }

    fn fine(&mut self, m: u64) -> [f64; 2] {
        let b = m / Self::BLOCK as u64;
        if b != self.block {
            self.stream.fill(b, &mut self.buf);
            self.block = b;
        }
        let s = (m % Self::BLOCK as u64) as usize * 2;
        [self.buf[s], self.buf[s + 1]]
    }

    /// Sum of `count` fine increments starting at `first`, times `√dt_f`.
    fn kick(&mut self, first: u64, count: u64, dt_f: f64) -> [f64; 2] {
        let mut w = [0.0; 2];
        for m in first..first + count {
            let z = self.fine(m);
            w[0] += z[0];
            w[1] += z[1];
        }
        let s = dt_f.sqrt();
        [s * w[0], s * w[1]]
    }
}

/// A sample of a path: position after `step` steps and whether it stopped.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub step: u64,
    pub t: f64,
    pub x: Point,
    pub stopped: bool,
}

/// The fast-flow diffusion, stopped on reaching `{H ≥ z_max}`.
pub struct FastFlow<'a> {
    pub h: &'a Hamiltonian,
    pub reeb: &'a Reeb,
    pub cfg: FastFlowConfig,
}

/// Expectations at each requested time for each observable.
#[derive(Debug, Clone, Serialize)]
pub struct Expectations {
    pub times: Vec<f64>,
    /// `estimates[i][j]`: observable `j` at time `i`.
    pub estimates: Vec<Vec<Estimate>>,
    /// Stopped paths by each time.
    pub stopped: Vec<usize>,
}

/// Result of the averaging probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeResult {
    pub eps: f64,
    pub t: f64,
    pub estimate: Estimate,
    /// `u^∧(Π x)`.
    pub target: f64,
    pub residual: f64,
    /// Contour-quadrature uncertainty of `target`.
    pub quadrature_budget: f64,
    pub stopped: usize,
}

pub type Observable<'f> = &'f (dyn Fn(Point) -> f64 + Sync);

impl<'a> FastFlow<'a> {
    /// Checks `dt ≤ ε T_min / (4π)`.
    pub fn new(h: &'a Hamiltonian, reeb: &'a Reeb, tables: &CoefficientTables, cfg: FastFlowConfig) -> Result<Self> {
        if !(cfg.eps > 0.0 && cfg.dt > 0.0 && cfg.max_rotation > 0.0) {
            return Err(Error::Parameter("eps, dt and max_rotation must be positive".into()));
        }
        let limit = dt_limit(cfg.eps, min_period(tables, reeb.graph.edges.len()));
        if cfg.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!("dt = {} exceeds ε·T_min/(4π) = {limit:.3e}", cfg.dt)));
        }
        Ok(Self { h, reeb, cfg })
    }

    /// Runs path `path` for `steps` steps, calling `visit` at the start and
    /// after every step. Once stopped, the position is frozen.
    pub fn run_path(&self, x0: Point, path: u64, steps: u64, mut visit: impl FnMut(&PathPoint)) -> Result<()> {
        let cfg = &self.cfg;
        let per_half = 1u64 << cfg.noise_refine;
        let dt_f = cfg.fine_dt();
        let tau = cfg.dt / cfg.eps;
        let z_max = self.reeb.z_max();
        let mut inc = Increments::new(cfg.seed, path);
        let mut p = PathPoint { step: 0, t: 0.0, x: x0, stopped: self.h.value(x0) >= z_max };
        visit(&p);
        for n in 0..steps {
            if !p.stopped {
                let first = 2 * n * per_half;
                let w = inc.kick(first, per_half, dt_f);
                let mut x = [p.x[0] + w[0], p.x[1] + w[1]];
                x = advect(self.h, x, tau, cfg.max_rotation, true)?;
                let w = inc.kick(first + per_half, per_half, dt_f);
                x = [x[0] + w[0], x[1] + w[1]];
                p.x = x;
                p.stopped = self.h.value(x) >= z_max;
            }
            p.step = n + 1;
            p.t = (n + 1) as f64 * cfg.dt;
            visit(&p);
        }
        Ok(())
    }

    fn steps_to(&self, t: f64) -> Result<u64> {
        let n = (t / self.cfg.dt).round();
        if (n * self.cfg.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Parameter(format!("t = {t} is not a multiple of dt = {}", self.cfg.dt)));
        }
        Ok(n as u64)
    }

    /// Runs all paths in chunks and merges per-chunk accumulators in order.
    fn fold_paths<A, F>(&self, init: impl Fn() -> A + Sync, per_path: F) -> Result<A>
    where
        A: Send + Merge,
        F: Fn(u64, &mut A) -> Result<()> + Sync,
    {
        let paths = self.cfg.paths;
        let chunks = paths.div_ceil(CHUNK);
        let parts = self.cfg.exec.try_map(chunks, |c| {
            let mut acc = init();
            for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                per_path(p as u64, &mut acc)?;
            }
            Ok::<_, Error>(acc)
        })?;
        let mut total = init();
        for part in &parts {
            total.merge(part);
        }
        Ok(total)
    }

    /// `E_x u(X_ε(t))` for every observable and time, with standard errors.
    /// Stopped paths contribute `u` at the stopping position.
    pub fn estimate_semigroup(&self, x0: Point, times: &[f64], fs: &[Observable<'_>]) -> Result<Expectations> {
        let steps: Vec<u64> = times.iter().map(|&t| self.steps_to(t)).collect::<Result<_>>()?;
        let last = steps.iter().copied().max().unwrap_or(0);
        let nf = fs.len();
        let nt = times.len();
        let acc = self.fold_paths(
            || Grid { acc: vec![Accumulator::default(); nt * nf], stopped: vec![0; nt] },
            |path, g| {
                self.run_path(x0, path, last, |p| {
                    for (i, &s) in steps.iter().enumerate() {
                        if s == p.step {
                            for (j, f) in fs.iter().enumerate() {
                                g.acc[i * nf + j].push(f(p.x));
                            }
                            g.stopped[i] += usize::from(p.stopped);
                        }
                    }
                })
            },
        )?;
        let stopped = acc.stopped.clone();
        if let Some(&s) = stopped.last() {
            if s as f64 > 0.1 * self.cfg.paths as f64 {
                log::warn!("{s} of {} paths stopped at z_max", self.cfg.paths);
            }
        }
        let estimates = (0..nt).map(|i| (0..nf).map(|j| acc.acc[i * nf + j].estimate()).collect()).collect();
        Ok(Expectations { times: times.to_vec(), estimates, stopped })
    }

    /// `E[H(X_t) − H(x) − ½∫₀ᵗ ΔH(X_s) ds]`, which vanishes for the exact
    /// process since the advection is tangent to level sets. The time
    /// integral uses the trapezoid rule on step endpoints and freezes at the
    /// stopping time.
    pub fn martingale_check(&self, x0: Point, t: f64) -> Result<Estimate> {
        let steps = self.steps_to(t)?;
        let h = self.h;
        let h0 = h.value(x0);
        let dt = self.cfg.dt;
        let acc = self.fold_paths(Accumulator::default, |path, acc| {
            let mut integral = 0.0;
            let mut prev = h.laplacian(x0);
            let mut frozen = false;
            let mut end = h0;
            self.run_path(x0, path, steps, |p| {
                if p.step == 0 || frozen {
                    return;
                }
                let lap = h.laplacian(p.x);
                integral += 0.5 * dt * (prev + lap);
                prev = lap;
                end = h.value(p.x);
                frozen = p.stopped;
            })?;
            acc.push(end - h0 - 0.5 * integral);
            Ok(())
        })?;
        Ok(acc.estimate())
    }

    /// `|E_x u(X_ε(ε^α)) − u^∧(Π x)|` for `α ∈ (4/7, 2/3)`.
    ///
    /// The step is shrunk so that `ε^α` is a whole number of steps. The
    /// starting point must lie on an edge away from any saddle band.
    pub fn averaging_probe(&self, u: Observable<'_>, x0: Point, alpha: f64, contour: &ContourOptions) -> Result<ProbeResult> {
        if !(alpha > 4.0 / 7.0 && alpha < 2.0 / 3.0) {
            return Err(Error::Parameter(format!("probe exponent {alpha} outside (4/7, 2/3)")));
        }
        match self.reeb.atlas.corner_labels(x0) {
            Some(ls) if ls.iter().all(|l| matches!(l, Label::Edge(_))) => {}
            Some(ls) if ls.iter().any(|l| matches!(l, Label::Band(_))) => {
                return Err(Error::Precondition(format!("probe start {x0:?} lies in a saddle band")))
            }
            _ => {
                let p = self.reeb.project_detailed(self.h, x0)?;
                if p.vertex.is_some() {
                    return Err(Error::Precondition(format!("probe start {x0:?} projects onto a vertex")));
                }
            }
        }
        let gp = self.reeb.project(self.h, x0)?;
        let target = average_at(self.h, self.reeb, u, gp.z, gp.k, contour)?;
        let coarse = ContourOptions { resolution: (contour.resolution / 2).max(16), ..*contour };
        let budget = (average_at(self.h, self.reeb, u, gp.z, gp.k, &coarse)? - target).abs();

        let t = self.cfg.eps.powf(alpha);
        let n = (t / self.cfg.dt).ceil().max(1.0);
        let flow = FastFlow { cfg: FastFlowConfig { dt: t / n, ..self.cfg }, ..*self };
        let e = flow.estimate_semigroup(x0, &[t], &[u])?;
        let estimate = e.estimates[0][0];
        Ok(ProbeResult {
            eps: self.cfg.eps,
            t,
            estimate,
            target,
            residual: (estimate.mean - target).abs(),
            quadrature_budget: budget,
            stopped: e.stopped[0],
        })
    }

    /// Writes `t,x1,x2,H,k` rows for one path, sampled every `every` steps.
    /// `k` is `-1` for points at or above the cap.
    pub fn write_path_csv(&self, x0: Point, path: u64, t_end: f64, every: u64, mut w: impl std::io::Write) -> Result<()> {
        let steps = self.steps_to(t_end)?;
        let every = every.max(1);
        let mut rows = Vec::new();
        self.run_path(x0, path, steps, |p| {
            if p.step % every == 0 || p.step == steps {
                rows.push(*p);
            }
        })?;
        let io = |e: std::io::Error| Error::Config(e.to_string());
        writeln!(w, "t,x1,x2,H,k").map_err(io)?;
        for p in rows {
            let k = if p.stopped { -1 } else { self.reeb.edge_of(self.h, p.x).map(|k| k as i64).unwrap_or(-1) };
            writeln!(w, "{},{},{},{},{}", p.t, p.x[0], p.x[1], self.h.value(p.x), k).map_err(io)?;
        }
        Ok(())
    }
}

trait Merge {
    fn merge(&mut self, other: &Self);
}

impl Merge for Accumulator {
    fn merge(&mut self, other: &Self) {
        Accumulator::merge(self, other)
    }
}

struct Grid {
    acc: Vec<Accumulator>,
    stopped: Vec<usize>,
}

impl Merge for Grid {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
        for (a, b) in self.stopped.iter_mut().zip(&other.stopped) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TableOptions;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::reeb::build_reeb;

    fn setup(spec: HamiltonianSpec) -> (Hamiltonian, Reeb, CoefficientTables) {
        let h = Hamiltonian::new(spec, 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, 2.0, 300).unwrap();
        let opts = TableOptions { n_core: 12, cross_checks: false, ..Default::default() };
        let t = CoefficientTables::build(&h, &r, &opts).unwrap();
        (h, r, t)
    }

    #[test]
    fn advection_conserves_energy_and_matches_rotation() {
        let (h, _, _) = setup(HamiltonianSpec::Radial);
        // ẋ = (x₂, −x₁): clockwise rotation by angle τ.
        let x = [0.6, -0.3];
        let y = advect(&h, x, 1.3, 0.1, true).unwrap();
        let (c, s) = (1.3f64.cos(), 1.3f64.sin());
        assert!((y[0] - (c * x[0] + s * x[1])).abs() < 1e-5);
        assert!((y[1] - (-s * x[0] + c * x[1])).abs() < 1e-5);
        assert!((h.value(y) - h.value(x)).abs() < 1e-14);
    }

    #[test]
    fn step_guard_and_determinism() {
        let (h, r, t) = setup(HamiltonianSpec::two_well());
        let limit = dt_limit(0.05, min_period(&t, r.graph.edges.len()));
        let bad = FastFlowConfig { eps: 0.05, dt: 2.0 * limit, ..Default::default() };
        assert!(matches!(FastFlow::new(&h, &r, &t, bad), Err(Error::Parameter(_))));
        let cfg = FastFlowConfig { eps: 0.05, dt: 1e-3, paths: 20, noise_refine: 1, exec: Exec::Sequential, ..Default::default() };
        let f = FastFlow::new(&h, &r, &t, cfg).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        f.run_path([1.0, 0.3], 4, 100, |p| a.push(p.x)).unwrap();
        f.run_path([1.0, 0.3], 4, 100, |p| b.push(p.x)).unwrap();
        assert_eq!(a, b);
        // The dt/2 run on the same Brownian path stays close.
        let g = FastFlow::new(&h, &r, &t, cfg.halved().unwrap()).unwrap();
        let mut c = Vec::new();
        g.run_path([1.0, 0.3], 4, 200, |p| c.push(p.x)).unwrap();
        let (x, y) = (a[100], c[200]);
        assert!((h.value(x) - h.value(y)).abs() < 0.05, "{x:?} {y:?}");
    }

    #[test]
    fn martingale_and_sequential_agree() {
        let (h, r, t) = setup(HamiltonianSpec::anisotropic());
        let cfg = FastFlowConfig { eps: 0.1, dt: 2e-3, paths: 2000, exec: Exec::Parallel, ..Default::default() };
        let f = FastFlow::new(&h, &r, &t, cfg).unwrap();
        let m = f.martingale_check([0.5, 0.2], 0.2).unwrap();
        assert!(m.mean.abs() <= 4.0 * m.std_error, "{m:?}");
        let s = FastFlow::new(&h, &r, &t, FastFlowConfig { exec: Exec::Sequential, ..cfg }).unwrap();
        assert_eq!(s.martingale_check([0.5, 0.2], 0.2).unwrap(), m);
    }

    #[test]
    fn probe_rejects_saddle_band_and_bad_exponent() {
        let (h, r, t) = setup(HamiltonianSpec::two_well());
        let cfg = FastFlowConfig { eps: 0.2, dt: 1e-3, paths: 200, ..Default::default() };
        let f = FastFlow::new(&h, &r, &t, cfg).unwrap();
        let s = r.graph.saddles().next().unwrap().location.unwrap();
        let u = |x: Point| x[0];
        let opts = ContourOptions::default();
        assert!(matches!(f.averaging_probe(&u, s, 0.6, &opts), Err(Error::Precondition(_))));
        assert!(matches!(f.averaging_probe(&u, [0.5, 0.0], 0.7, &opts), Err(Error::Parameter(_))));
        let p = f.averaging_probe(&u, [0.5, 0.0], 0.6, &opts).unwrap();
        assert!(p.target.is_finite() && p.residual.is_finite());
    }

    #[test]
    fn path_csv_has_header_and_rows() {
        let (h, r, t) = setup(HamiltonianSpec::Radial);
        let cfg = FastFlowConfig { eps: 0.1, dt: 1e-2, ..Default::default() };
        let f = FastFlow::new(&h, &r, &t, cfg).unwrap();
        let mut out = Vec::new();
        f.write_path_csv([0.5, 0.0], 0, 0.1, 2, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,H,k");
        assert_eq!(lines.len(), 1 + 6);
    }
}
