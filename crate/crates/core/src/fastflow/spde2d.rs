//! The 2D equation `du = (½Δu + (1/ε)⟨∇̄H, ∇u⟩ + b(u)) dt + g(u) dW` on a
//! uniform grid over the computational box, by exponential Euler.
//!
//! The semigroup step is split as `D(dt/2) A(dt) D(dt/2)`. `A` transports
//! along the exact characteristics of the fast flow: every node's foot point
//! `Φ_{dt/ε}(x)` is integrated once and the field is read there by
//! Catmull–Rom interpolation. `D` is a Peaceman–Rachford step for `½Δ` with
//! reflecting boundaries. Noise uses the same normals as the graph solver.

use serde::{Deserialize, Serialize};

use super::{advect, dt_limit, min_period};
use crate::coeffs::{CoefficientTables, Weight};
use crate::exec::Exec;
use crate::hamiltonian::Hamiltonian;
use crate::noise::NoiseBasis;
use crate::reeb::{GraphPoint, Reeb};
use crate::rng::NormalStream;
use crate::spdegraph::{GraphSpde, Nonlinearity, DIVERGENCE_NORM};
use crate::{Error, Point, Result};

/// `n × n` nodes on `[-bound, bound]²`, `x` index fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    pub n: usize,
    pub bound: f64,
}

impl Grid2d {
    pub fn spacing(&self) -> f64 {
        2.0 * self.bound / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn node(&self, idx: usize) -> Point {
        let h = self.spacing();
        [-self.bound + (idx % self.n) as f64 * h, -self.bound + (idx / self.n) as f64 * h]
    }

    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.node(i))).collect()
    }

    /// Catmull–Rom stencil along one axis: indices and weights.
    fn stencil(&self, x: f64) -> ([usize; 4], [f64; 4]) {
        let s = ((x + self.bound) / self.spacing()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        let f = s - i as f64;
        let (f2, f3) = (f * f, f * f * f);
        let w = [0.5 * (-f3 + 2.0 * f2 - f), 0.5 * (3.0 * f3 - 5.0 * f2 + 2.0), 0.5 * (-3.0 * f3 + 4.0 * f2 + f), 0.5 * (f3 - f2)];
        let last = self.n as isize - 1;
        let idx = [-1isize, 0, 1, 2].map(|d| (i as isize + d).clamp(0, last) as usize);
        (idx, w)
    }

    /// Bicubic Catmull–Rom interpolation of nodal values.
    pub fn interpolate(&self, u: &[f64], x: Point) -> f64 {
        let (ix, wx) = self.stencil(x[0]);
        let (iy, wy) = self.stencil(x[1]);
        let mut s = 0.0;
        for b in 0..4 {
            let row = iy[b] * self.n;
            let mut r = 0.0;
            for a in 0..4 {
                r += wx[a] * u[row + ix[a]];
            }
            s += wy[b] * r;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Spde2dConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Nodes per side.
    pub grid: usize,
    pub replicas: usize,
    pub seed: u64,
    pub max_rotation: f64,
    pub exec: Exec,
}

impl Default for Spde2dConfig {
    fn default() -> Self {
        Self { eps: 0.1, dt: 1e-2, t_end: 1.0, grid: 61, replicas: 20, seed: 1, max_rotation: 0.1, exec: Exec::Parallel }
    }
}

impl Spde2dConfig {
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(1.0) as u64
    }

    /// Grid nodes times steps times replicas.
    pub fn cell_updates(&self) -> f64 {
        (self.grid * self.grid) as f64 * self.steps() as f64 * self.replicas as f64
    }
}

struct Stencil {
    ix: [usize; 4],
    iy: [usize; 4],
    wx: [f64; 4],
    wy: [f64; 4],
}

/// The 2D solver with precomputed characteristics and noise fields.
pub struct Spde2d<'a> {
    pub h: &'a Hamiltonian,
    pub grid: Grid2d,
    pub cfg: Spde2dConfig,
    feet: Vec<Stencil>,
    noise: Vec<Vec<f64>>,
    /// Nodes with `H < z_max`.
    pub active: Vec<bool>,
}

impl<'a> Spde2d<'a> {
    pub fn new(h: &'a Hamiltonian, reeb: &Reeb, tables: &CoefficientTables, basis: &NoiseBasis, cfg: Spde2dConfig) -> Result<Self> {
        if cfg.grid < 4 || !(cfg.eps > 0.0 && cfg.dt > 0.0) {
            return Err(Error::Parameter("grid ≥ 4, eps > 0 and dt > 0 required".into()));
        }
        let limit = dt_limit(cfg.eps, min_period(tables, reeb.graph.edges.len()));
        if cfg.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!("dt = {} exceeds ε·T_min/(4π) = {limit:.3e}", cfg.dt)));
        }
        if basis.len() > crate::rng::MAX_NORMALS_PER_STEP {
            return Err(Error::Parameter(format!("{} noise modes exceed the per-step limit", basis.len())));
        }
        let grid = Grid2d { n: cfg.grid, bound: h.bound() };
        let tau = cfg.dt / cfg.eps;
        let feet = cfg.exec.try_map(grid.len(), |i| {
            let y = advect(h, grid.node(i), tau, cfg.max_rotation, false)?;
            let (ix, wx) = grid.stencil(y[0]);
            let (iy, wy) = grid.stencil(y[1]);
            Ok::<_, Error>(Stencil { ix, iy, wx, wy })
        })?;
        let noise = basis.fields.iter().map(|f| grid.sample(|x| f.eval(x))).collect();
        let z_max = reeb.z_max();
        let active = (0..grid.len()).map(|i| h.value(grid.node(i)) < z_max).collect();
        Ok(Self { h, grid, cfg, feet, noise, active })
    }

    pub fn modes(&self) -> usize {
        self.noise.len()
    }

    fn transport(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        self.feet
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                for b in 0..4 {
                    let row = s.iy[b] * n;
                    let mut r = 0.0;
                    for a in 0..4 {
                        r += s.wx[a] * u[row + s.ix[a]];
                    }
                    acc += s.wy[b] * r;
                }
                acc
            })
            .collect()
    }

    /// Peaceman–Rachford step of `u_t = ½Δu` over `tau`, reflecting walls.
    fn diffuse(&self, u: &[f64], tau: f64) -> Vec<f64> {
        let n = self.grid.n;
        let r = 0.25 * tau / (self.grid.spacing() * self.grid.spacing());
        // Second difference with ghost reflection.
        let d2 = |v: &[f64], i: usize, stride: usize, k: usize| -> f64 {
            let c = v[i];
            let lo = if k == 0 { v[i + stride] } else { v[i - stride] };
            let hi = if k == n - 1 { v[i - stride] } else { v[i + stride] };
            lo - 2.0 * c + hi
        };
        let mut half = vec![0.0; u.len()];
        let mut rhs = vec![0.0; n];
        let mut out = vec![0.0; n];
        // Implicit in x, explicit in y.
        for j in 0..n {
            for i in 0..n {
                let idx = j * n + i;
                rhs[i] = u[idx] + r * d2(u, idx, n, j);
            }
            solve_neumann(r, &rhs, &mut out);
            half[j * n..(j + 1) * n].copy_from_slice(&out);
        }
        let mut res = vec![0.0; u.len()];
        // Implicit in y, explicit in x.
        for i in 0..n {
            for j in 0..n {
                let idx = j * n + i;
                rhs[j] = half[idx] + r * d2(&half, idx, 1, i);
            }
            solve_neumann(r, &rhs, &mut out);
            for j in 0..n {
                res[j * n + i] = out[j];
            }
        }
        res
    }

    /// `S_ε(dt) u`.
    pub fn semigroup(&self, u: &[f64]) -> Vec<f64> {
        let half = 0.5 * self.cfg.dt;
        let a = self.diffuse(u, half);
        let b = self.transport(&a);
        self.diffuse(&b, half)
    }

    pub fn step(&self, u: &[f64], b: &Nonlinearity, g: &Nonlinearity, xi: &[f64], t: f64) -> Result<Vec<f64>> {
        let dt = self.cfg.dt;
        let sdt = dt.sqrt();
        let v: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, &ui)| {
                let dw: f64 = self.noise.iter().zip(xi).map(|(e, x)| e[i] * x).sum::<f64>() * sdt;
                ui + dt * b.eval(ui) + g.eval(ui) * dw
            })
            .collect();
        let w = self.semigroup(&v);
        let norm = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { norm, t });
        }
        Ok(w)
    }

    /// Runs replica `replica`, calling `visit(step, state)` at the start and
    /// after every step.
    pub fn run(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, replica: u64, mut visit: impl FnMut(u64, &[f64])) -> Result<()> {
        let mut stream = NormalStream::new(self.cfg.seed, replica);
        let mut xi = vec![0.0; self.modes()];
        let mut u = u0.to_vec();
        visit(0, &u);
        for n in 0..self.cfg.steps() {
            stream.fill(n, &mut xi);
            u = self.step(&u, b, g, &xi, (n + 1) as f64 * self.cfg.dt)?;
            visit(n + 1, &u);
        }
        Ok(())
    }

    /// Final state of one replica.
    pub fn solve(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, replica: u64) -> Result<Vec<f64>> {
        let mut last = Vec::new();
        let steps = self.cfg.steps();
        self.run(u0, b, g, replica, |n, u| {
            if n == steps {
                last = u.to_vec();
            }
        })?;
        Ok(last)
    }

    /// `∫ γ^∨ u² dx` over the active nodes.
    pub fn hgamma_norm_sq(&self, weight: &Weight, u: &[f64]) -> f64 {
        let a = self.grid.spacing().powi(2);
        (0..u.len()).filter(|&i| self.active[i]).map(|i| a * weight.lift(self.h, self.grid.node(i)) * u[i] * u[i]).sum()
    }

    /// Graph points of the active nodes, for lifting graph states.
    pub fn node_projections(&self, reeb: &Reeb) -> Result<Vec<Option<GraphPoint>>> {
        self.cfg.exec.try_map(self.grid.len(), |i| if self.active[i] { reeb.project(self.h, self.grid.node(i)).map(Some) } else { Ok(None) })
    }

    /// Per replica, `sup_{τ ≤ t ≤ T} |u_ε(t) − ū(t)^∨|²_{H_γ}` with both
    /// equations driven by the same normals.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled_sup_difference(
        &self,
        reeb: &Reeb,
        graph: &GraphSpde,
        u0: &[f64],
        ubar0: &[f64],
        b: &Nonlinearity,
        g: &Nonlinearity,
        weight: &Weight,
        tau: f64,
    ) -> Result<Vec<f64>> {
        if graph.cfg.dt != self.cfg.dt || graph.cfg.seed != self.cfg.seed || graph.cfg.steps() != self.cfg.steps() {
            return Err(Error::Parameter("coupled solvers need the same dt, horizon and seed".into()));
        }
        if graph.modes() != self.modes() {
            return Err(Error::Parameter("coupled solvers need the same noise basis".into()));
        }
        let points = self.node_projections(reeb)?;
        let first = (tau / self.cfg.dt).ceil() as u64;
        self.cfg.exec.try_map(self.cfg.replicas, |r| {
            let mut bars = Vec::new();
            graph.run(ubar0, b, g, r as u64, |n, v| {
                if n >= first {
                    bars.push(v.to_vec());
                }
            })?;
            let mut sup = 0.0f64;
            self.run(u0, b, g, r as u64, |n, u| {
                if n < first {
                    return;
                }
                let bar = &bars[(n - first) as usize];
                let diff: Vec<f64> = u.iter().zip(&points).map(|(x, p)| p.map_or(0.0, |p| x - graph.q.eval(bar, p))).collect();
                sup = sup.max(self.hgamma_norm_sq(weight, &diff));
            })?;
            Ok(sup)
        })
    }
}

/// Solves `(I − r D₂) x = rhs` with the reflecting second difference.
fn solve_neumann(r: f64, rhs: &[f64], x: &mut [f64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let diag = 1.0 + 2.0 * r;
    // Row 0: diag·x0 − 2r·x1; row n−1: −2r·x_{n−2} + diag·x_{n−1}.
    c[0] = -2.0 * r / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let lower = if i == n - 1 { -2.0 * r } else { -r };
        let upper = if i == n - 1 { 0.0 } else { -r };
        let m = diag - lower * c[i - 1];
        c[i] = upper / m;
        d[i] = (rhs[i] - lower * d[i - 1]) / m;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TableOptions;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::noise::{Atom, SpectralMeasure};
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
    fn interpolation_reproduces_quadratics() {
        let g = Grid2d { n: 21, bound: 2.0 };
        let f = |x: Point| 0.3 * x[0] * x[0] - x[0] * x[1] + x[1] * x[1] + 1.0;
        let u = g.sample(f);
        for x in [[0.13, -0.71], [1.05, 0.333], [-0.5, 0.9]] {
            assert!((g.interpolate(&u, x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_preserves_constants_and_mass() {
        let (h, r, t) = setup(HamiltonianSpec::anisotropic());
        let mu = SpectralMeasure::new(vec![Atom { lambda: [0.0, 0.0], weight: 1.0 }]).unwrap();
        let basis = NoiseBasis::build(&mu, &t, &r.graph);
        let cfg = Spde2dConfig { eps: 0.5, dt: 0.02, grid: 31, ..Default::default() };
        let s = Spde2d::new(&h, &r, &t, &basis, cfg).unwrap();
        let c = s.semigroup(&vec![1.7; s.grid.len()]);
        assert!(c.iter().all(|v| (v - 1.7).abs() < 1e-12));
        // Heat part alone conserves the trapezoid mass under reflection.
        let u = s.grid.sample(|x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp());
        let d = s.diffuse(&u, 0.1);
        let mass = |v: &[f64]| {
            let n = s.grid.n;
            (0..v.len())
                .map(|i| {
                    let (a, b) = (i % n, i / n);
                    let wa = if a == 0 || a == n - 1 { 0.5 } else { 1.0 };
                    let wb = if b == 0 || b == n - 1 { 0.5 } else { 1.0 };
                    wa * wb * v[i]
                })
                .sum::<f64>()
        };
        assert!((mass(&d) - mass(&u)).abs() < 1e-10 * mass(&u));
    }

    #[test]
    fn transport_follows_the_flow() {
        // For the anisotropic Hamiltonian the flow is an explicit rotation.
        let (h, r, t) = setup(HamiltonianSpec::anisotropic());
        let mu = SpectralMeasure::new(vec![Atom { lambda: [0.0, 0.0], weight: 1.0 }]).unwrap();
        let basis = NoiseBasis::build(&mu, &t, &r.graph);
        let cfg = Spde2dConfig { eps: 1.0, dt: 0.2, grid: 121, ..Default::default() };
        let s = Spde2d::new(&h, &r, &t, &basis, cfg).unwrap();
        let f = |x: Point| (0.8 * x[0]).sin() * (-0.1 * x[1] * x[1]).exp();
        let u = s.grid.sample(f);
        let v = s.transport(&u);
        for i in [s.grid.len() / 2 + 7, s.grid.len() / 3 + 40] {
            let x = s.grid.node(i);
            let y = advect(&h, x, 0.2, 0.01, true).unwrap();
            assert!((v[i] - f(y)).abs() < 1e-4, "{} vs {}", v[i], f(y));
        }
    }
}
