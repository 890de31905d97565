//! Finite-volume generator of the graph diffusion, its semigroup, a
//! jump-process sampler and reaction–diffusion stepping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientTables, GraphFunction, Weight};
use crate::exec::Exec;
use crate::reeb::{GraphPoint, ReebGraph};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellKind {
    /// Interior node `index` of edge `edge`.
    Interior { edge: usize, index: usize },
    Vertex { vertex: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CellKind,
    /// Representative level.
    pub z: f64,
    /// `∫ T_k dz` over the cell.
    pub mass: f64,
}

/// Node layout of one edge: `n` equal gaps of width `dz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGrid {
    pub z_lo: f64,
    pub dz: f64,
    pub n: usize,
    /// Cell ids of nodes `0..=n`; the ends are the vertex cells.
    pub cells: Vec<usize>,
}

impl EdgeGrid {
    pub fn node_z(&self, i: usize) -> f64 {
        self.z_lo + i as f64 * self.dz
    }
}

/// `L̄ f ≈ (1/m_i) Σ_j w_ij (f_j − f_i)` on a cell tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub cells: Vec<Cell>,
    pub edges: Vec<EdgeGrid>,
    /// Symmetric face weights `w_ij = α(face) / (2·gap)`.
    pub links: Vec<Vec<(usize, f64)>>,
    pub cap_cell: usize,
    /// The cap cell has no outgoing rates: chains stop there.
    #[serde(default)]
    pub absorbing_cap: bool,
    /// Largest stable explicit rate, `max_i Σ_j w_ij / m_i`.
    pub max_rate: f64,
}

impl GeneratorMatrix {
    /// Assembles the generator with gaps close to `h_target`.
    pub fn discretize(graph: &ReebGraph, tables: &CoefficientTables, h_target: f64) -> Result<Self> {
        if !(h_target > 0.0) {
            return Err(Error::Parameter(format!("h_target must be positive, got {h_target}")));
        }
        let mut cells: Vec<Cell> = graph
            .vertices
            .iter()
            .map(|v| Cell { kind: CellKind::Vertex { vertex: v.id }, z: v.z, mass: 0.0 })
            .collect();
        let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells.len()];
        let mut edges = Vec::new();
        for e in &graph.edges {
            let t = tables.edge(e.id);
            let width = e.z_hi - e.z_lo;
            let n = ((width / h_target).ceil() as usize).max(3);
            let dz = width / n as f64;
            let mut ids = vec![e.lower()];
            for i in 1..n {
                cells.push(Cell { kind: CellKind::Interior { edge: e.id, index: i }, z: e.z_lo + i as f64 * dz, mass: 0.0 });
                links.push(Vec::new());
                ids.push(cells.len() - 1);
            }
            ids.push(e.upper());
            for i in 0..=n {
                let z = e.z_lo + i as f64 * dz;
                let a = if i == 0 { z } else { z - 0.5 * dz };
                let b = if i == n { z } else { z + 0.5 * dz };
                cells[ids[i]].mass += t.integral_t(a, b);
            }
            for i in 0..n {
                let face = e.z_lo + (i as f64 + 0.5) * dz;
                let w = t.alpha(face) / (2.0 * dz);
                links[ids[i]].push((ids[i + 1], w));
                links[ids[i + 1]].push((ids[i], w));
            }
            edges.push(EdgeGrid { z_lo: e.z_lo, dz, n, cells: ids });
        }
        for (i, c) in cells.iter().enumerate() {
            if !(c.mass.is_finite() && c.mass > 0.0) {
                return Err(Error::Table(format!("cell {i} at z = {} has mass {}", c.z, c.mass)));
            }
        }
        let cap_cell = graph
            .vertices
            .iter()
            .find(|v| v.kind == crate::reeb::VertexKind::Infinity)
            .map(|v| v.id)
            .expect("graph has a cap");
        let max_rate = (0..cells.len())
            .map(|i| links[i].iter().map(|l| l.1).sum::<f64>() / cells[i].mass)
            .fold(0.0, f64::max);
        Ok(Self { cells, edges, links, cap_cell, absorbing_cap: false, max_rate })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.mass).collect()
    }

    /// Off-diagonal rates `Q_ij` of row `i`.
    pub fn rates(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let m = self.cells[i].mass;
        let links: &[(usize, f64)] = if self.absorbing_cap && i == self.cap_cell { &[] } else { &self.links[i] };
        links.iter().map(move |&(j, w)| (j, w / m))
    }

    /// The same generator stopped at the cap, matching plane paths that are
    /// frozen when they reach `z_max`.
    pub fn with_absorbing_cap(mut self) -> Self {
        self.absorbing_cap = true;
        self
    }

    /// `Q_ii`, the negated sum of the row's off-diagonal entries.
    pub fn diagonal(&self, i: usize) -> f64 {
        -self.rates(i).fold(0.0, |acc, (_, q)| acc + q)
    }

    /// Row sum accumulated in the same order as the diagonal, so exactly 0.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rates(i).fold(0.0, |acc, (_, q)| acc + q) + self.diagonal(i)
    }

    /// `(Q f)_i` for all cells.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.rates(i).map(|(j, q)| q * (f[j] - f[i])).sum())
            .collect()
    }

    /// `(mᵀ Q)_j`.
    pub fn stationarity_residual(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.len()];
        for i in 0..self.len() {
            let m = self.cells[i].mass;
            for (j, q) in self.rates(i) {
                r[j] += m * q;
            }
            r[i] += m * self.diagonal(i);
        }
        r
    }

    /// Cell nearest to a graph point.
    pub fn cell_of(&self, p: GraphPoint) -> usize {
        let g = &self.edges[p.k];
        let i = ((p.z - g.z_lo) / g.dz).round().clamp(0.0, g.n as f64) as usize;
        g.cells[i]
    }

    /// `(z, k)` of a cell; vertex cells report their first incident edge.
    pub fn point_of(&self, cell: usize) -> GraphPoint {
        match self.cells[cell].kind {
            CellKind::Interior { edge, .. } => GraphPoint { z: self.cells[cell].z, k: edge },
            CellKind::Vertex { .. } => {
                let k = self.edges.iter().position(|g| g.cells[0] == cell || g.cells[g.n] == cell).expect("vertex cell on an edge");
                GraphPoint { z: self.cells[cell].z, k }
            }
        }
    }

    /// Linear interpolation of cell values along edge `p.k`.
    pub fn eval(&self, values: &[f64], p: GraphPoint) -> f64 {
        let g = &self.edges[p.k];
        let s = ((p.z - g.z_lo) / g.dz).clamp(0.0, g.n as f64);
        let i = (s.floor() as usize).min(g.n - 1);
        let f = s - i as f64;
        (1.0 - f) * values[g.cells[i]] + f * values[g.cells[i + 1]]
    }

    /// `T`-weighted cell averages of `f(z, k)`.
    pub fn project_fn(&self, tables: &CoefficientTables, f: impl Fn(f64, usize) -> f64) -> Vec<f64> {
        const GL: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
        let mut acc = vec![0.0; self.len()];
        let mut mass = vec![0.0; self.len()];
        for (k, g) in self.edges.iter().enumerate() {
            let t = tables.edge(k);
            for i in 0..=g.n {
                let z = g.node_z(i);
                let a = if i == 0 { z } else { z - 0.5 * g.dz };
                let b = if i == g.n { z } else { z + 0.5 * g.dz };
                // Split at the node so the log singularity sits at an end.
                for (lo, hi) in [(a, z), (z, b)] {
                    if hi <= lo {
                        continue;
                    }
                    let m = t.integral_t(lo, hi);
                    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &(x, w) in &GL {
                        let zz = c + r * x;
                        let tt = t.t(zz);
                        num += w * tt * f(zz, k);
                        den += w * tt;
                    }
                    acc[g.cells[i]] += m * num / den;
                    mass[g.cells[i]] += m;
                }
            }
        }
        acc.iter().zip(&mass).map(|(a, m)| a / m).collect()
    }

    pub fn project_graph_fn(&self, tables: &CoefficientTables, f: &GraphFunction) -> Vec<f64> {
        self.project_fn(tables, |z, k| f.eval(tables, GraphPoint { z, k }))
    }

    /// Cell values resampled onto the table grids.
    pub fn to_graph_function(&self, tables: &CoefficientTables, graph: &ReebGraph, values: &[f64]) -> GraphFunction {
        let edges = tables
            .edges
            .iter()
            .map(|t| t.sample_zs().iter().map(|&z| self.eval(values, GraphPoint { z, k: t.edge })).collect())
            .collect();
        let vertices = graph.vertices.iter().map(|v| values[v.id]).collect();
        GraphFunction { edges, vertices, continuous: true }
    }

    /// `Σ_i m_i γ(z_i) f_i²`, the discrete `H̄_γ` norm squared.
    pub fn weighted_norm_sq(&self, weight: &Weight, f: &[f64]) -> f64 {
        self.cells.iter().zip(f).map(|(c, v)| c.mass * weight.h(c.z) * v * v).sum()
    }

    /// Largest step with a discrete maximum principle for θ = ½.
    pub fn max_principle_dt(&self) -> f64 {
        2.0 / self.max_rate
    }

    /// `S̄(t) f` by Crank–Nicolson, with steps no longer than `dt` and short
    /// enough for the maximum principle.
    pub fn apply_semigroup(&self, f: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::Parameter(format!("semigroup time must be non-negative, got {t}")));
        }
        if t == 0.0 {
            return Ok(f.to_vec());
        }
        let stepper = CrankNicolson::new(self, dt.min(t))?;
        let steps = (t / stepper.dt).round().max(1.0) as usize;
        let stepper = if (steps as f64 * stepper.dt - t).abs() > 1e-12 * t {
            CrankNicolson::new(self, t / steps as f64)?
        } else {
            stepper
        };
        let mut u = f.to_vec();
        for _ in 0..steps {
            u = stepper.step(&u)?;
        }
        Ok(u)
    }

    /// Solves `Q f = 0` off the Dirichlet cells, with `f` fixed on them.
    pub fn steady_state(&self, dirichlet: &[(usize, f64)]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut sys = TreeSystem::new(self);
        let mut rhs = vec![0.0; n];
        let fixed: std::collections::HashMap<usize, f64> = dirichlet.iter().copied().collect();
        for i in 0..n {
            if let Some(&v) = fixed.get(&i) {
                sys.diag[i] = 1.0;
                for (j, _) in &self.links[i] {
                    sys.set_off(i, *j, 0.0);
                }
                rhs[i] = v;
            } else {
                sys.diag[i] = self.diagonal(i);
                for (j, q) in self.rates(i) {
                    sys.set_off(i, j, q);
                }
            }
        }
        sys.solve(&rhs)
    }

    /// Signed flux `Σ_k ± (face α) d_k f` at a vertex, using the discrete
    /// one-sided derivatives of the incident edges.
    pub fn vertex_flux(&self, f: &[f64], vertex: usize) -> f64 {
        let mut total = 0.0;
        for g in &self.edges {
            for (end, nb) in [(0usize, 1usize), (g.n, g.n - 1)] {
                if g.cells[end] != vertex {
                    continue;
                }
                let w = self.links[vertex].iter().find(|l| l.0 == g.cells[nb]).expect("link").1;
                // 2w·dz is the face α; the derivative points away from the vertex.
                total += 2.0 * w * g.dz * (f[g.cells[nb]] - f[vertex]) / g.dz;
            }
        }
        total
    }

    /// Continuous-time Markov chain path from the cell nearest `start`.
    pub fn sample_path(&self, start: GraphPoint, t_end: f64, seed: u64, path: u64) -> JumpPath {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, path));
        let mut cell = self.cell_of(start);
        let mut t = 0.0;
        let mut out = JumpPath { times: vec![0.0], cells: vec![cell], hit_cap: cell == self.cap_cell, t_end };
        loop {
            let rate = -self.diagonal(cell);
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rate;
            if t >= t_end {
                break;
            }
            let mut pick = rng.random::<f64>() * rate;
            let mut next = self.links[cell][0].0;
            for (j, q) in self.rates(cell) {
                next = j;
                if pick < q {
                    break;
                }
                pick -= q;
            }
            cell = next;
            out.hit_cap |= cell == self.cap_cell;
            out.times.push(t);
            out.cells.push(cell);
        }
        out
    }

    /// `E f(Ȳ(t))` at each `t` over `paths` chains, with standard errors.
    pub fn mc_expectation(&self, f: &[f64], start: GraphPoint, times: &[f64], paths: usize, seed: u64, exec: Exec) -> Vec<crate::stats::Estimate> {
        let t_end = times.iter().copied().fold(0.0, f64::max);
        let chunk = 1000;
        let parts = exec.map(paths.div_ceil(chunk), |c| {
            let mut acc = vec![crate::stats::Accumulator::default(); times.len()];
            for p in c * chunk..((c + 1) * chunk).min(paths) {
                let path = self.sample_path(start, t_end + 1e-12, seed, p as u64);
                for (a, &t) in acc.iter_mut().zip(times) {
                    a.push(f[path.cell_at(t)]);
                }
            }
            acc
        });
        let mut total = vec![crate::stats::Accumulator::default(); times.len()];
        for part in parts {
            for (a, b) in total.iter_mut().zip(&part) {
                a.merge(b);
            }
        }
        total.iter().map(|a| a.estimate()).collect()
    }

    /// Strang splitting of `v' = Q v + b(v)`.
    pub fn solve_reaction(&self, f0: &[f64], b: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
        let steps = (t_end / dt).ceil().max(1.0) as usize;
        let dt = t_end / steps as f64;
        let cn = CrankNicolson::new(self, dt)?;
        let half = |v: &mut [f64]| {
            for x in v.iter_mut() {
                *x = rk4_scalar(&b, *x, 0.5 * dt);
            }
        };
        let mut v = f0.to_vec();
        for n in 0..steps {
            half(&mut v);
            v = cn.step(&v)?;
            half(&mut v);
            let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !(norm <= 1e12) {
                return Err(Error::Divergence { norm, t: (n + 1) as f64 * dt });
            }
        }
        Ok(v)
    }

    /// Matrix Market coordinate dump of `Q`.
    pub fn write_matrix_market(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let nnz: usize = self.links.iter().map(|l| l.len() + 1).sum();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.len(), self.len(), nnz)?;
        for i in 0..self.len() {
            writeln!(w, "{} {} {:e}", i + 1, i + 1, self.diagonal(i))?;
            for (j, q) in self.rates(i) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, q)?;
            }
        }
        Ok(())
    }
}

fn rk4_scalar(b: &impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let k1 = b(x);
    let k2 = b(x + 0.5 * h * k1);
    let k3 = b(x + 0.5 * h * k2);
    let k4 = b(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// A piecewise-constant path of the jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub cells: Vec<usize>,
    /// Whether the path visited the cap cell (where it is reflected).
    pub hit_cap: bool,
    pub t_end: f64,
}

impl JumpPath {
    pub fn cell_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t);
        self.cells[i.saturating_sub(1)]
    }

    /// Time spent in each cell up to `t_end`.
    pub fn occupancy(&self, cells: usize) -> Vec<f64> {
        let mut occ = vec![0.0; cells];
        for i in 0..self.cells.len() {
            let next = self.times.get(i + 1).copied().unwrap_or(self.t_end);
            occ[self.cells[i]] += next - self.times[i];
        }
        occ
    }
}

/// Eliminated diagonal and `(child, parent, A_pc, A_cp)` in leaf-first order.
#[derive(Debug, Clone)]
struct Factor {
    d: Vec<f64>,
    elim: Vec<(usize, usize, f64, f64)>,
}

/// A linear system whose sparsity graph is a tree.
#[derive(Debug, Clone)]
struct TreeSystem {
    diag: Vec<f64>,
    /// `off[i]` holds `(j, A_ij)` for the tree neighbours `j` of `i`.
    off: Vec<Vec<(usize, f64)>>,
    /// Elimination order (leaves first) and parent of each node.
    order: Vec<usize>,
    parent: Vec<usize>,
}

impl TreeSystem {
    fn new(q: &GeneratorMatrix) -> Self {
        let n = q.len();
        let off: Vec<Vec<(usize, f64)>> = q.links.iter().map(|l| l.iter().map(|&(j, _)| (j, 0.0)).collect()).collect();
        let mut parent = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &(j, _) in &q.links[v] {
                if !seen[j] {
                    seen[j] = true;
                    parent[j] = v;
                    stack.push(j);
                }
            }
        }
        order.reverse();
        Self { diag: vec![0.0; n], off, order, parent }
    }

    fn set_off(&mut self, i: usize, j: usize, v: f64) {
        if let Some(e) = self.off[i].iter_mut().find(|e| e.0 == j) {
            e.1 = v;
        }
    }

    fn get_off(&self, i: usize, j: usize) -> f64 {
        self.off[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    fn factor(&self) -> Factor {
        let mut d = self.diag.clone();
        let mut elim = Vec::with_capacity(self.order.len());
        for &c in &self.order {
            let p = self.parent[c];
            if p != usize::MAX {
                let (a_pc, a_cp) = (self.get_off(p, c), self.get_off(c, p));
                d[p] -= a_pc * a_cp / d[c];
                elim.push((c, p, a_pc, a_cp));
            }
        }
        Factor { d, elim }
    }

    fn solve_factored(&self, f: &Factor, rhs: &[f64]) -> Vec<f64> {
        let mut b = rhs.to_vec();
        for &(c, p, a_pc, _) in &f.elim {
            b[p] -= a_pc * b[c] / f.d[c];
        }
        // Root first, then children in reverse elimination order.
        let mut x = vec![0.0; b.len()];
        let root = *self.order.last().expect("non-empty tree");
        x[root] = b[root] / f.d[root];
        for &(c, p, _, a_cp) in f.elim.iter().rev() {
            x[c] = (b[c] - a_cp * x[p]) / f.d[c];
        }
        x
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..x.len())
            .map(|i| (self.diag[i] * x[i] + self.off[i].iter().map(|&(j, a)| a * x[j]).sum::<f64>() - rhs[i]).abs())
            .fold(0.0, f64::max)
            / scale
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let d = self.factor();
        let x = self.solve_factored(&d, rhs);
        let residual = self.residual(&x, rhs);
        if !(residual <= 1e-9) {
            return Err(Error::Solver { residual });
        }
        Ok(x)
    }
}

/// One θ = ½ step `(I − ½dtQ) u⁺ = (I + ½dtQ) u`, pre-factored, with
/// sub-steps so that the maximum principle holds.
#[derive(Debug, Clone)]
pub struct CrankNicolson<'a> {
    q: &'a GeneratorMatrix,
    sys: TreeSystem,
    factor: Factor,
    pub dt: f64,
    sub: usize,
}

impl<'a> CrankNicolson<'a> {
    pub fn new(q: &'a GeneratorMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let sub = (dt / q.max_principle_dt()).ceil().max(1.0) as usize;
        let h = dt / sub as f64;
        let mut sys = TreeSystem::new(q);
        for i in 0..q.len() {
            sys.diag[i] = 1.0 - 0.5 * h * q.diagonal(i);
            for (j, r) in q.rates(i) {
                sys.set_off(i, j, -0.5 * h * r);
            }
        }
        let factor = sys.factor();
        Ok(Self { q, sys, factor, dt, sub })
    }

    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        let h = self.dt / self.sub as f64;
        let mut v = u.to_vec();
        for k in 0..self.sub {
            let rhs: Vec<f64> = (0..v.len()).map(|i| v[i] + 0.5 * h * self.q.rates(i).map(|(j, q)| q * (v[j] - v[i])).sum::<f64>()).collect();
            v = self.sys.solve_factored(&self.factor, &rhs);
            if k + 1 == self.sub {
                let residual = self.sys.residual(&v, &rhs);
                if !(residual <= 1e-9) {
                    return Err(Error::Solver { residual });
                }
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TableOptions;
    use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};
    use crate::reeb::{build_reeb, Reeb};

    fn setup(spec: HamiltonianSpec) -> (Reeb, CoefficientTables) {
        let h = Hamiltonian::new(spec, 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, 2.0, 300).unwrap();
        let opts = TableOptions { n_core: 12, cross_checks: false, ..Default::default() };
        let t = CoefficientTables::build(&h, &r, &opts).unwrap();
        (r, t)
    }

    #[test]
    fn radial_generator_is_tridiagonal_and_conservative() {
        let (r, t) = setup(HamiltonianSpec::Radial);
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap();
        for i in 0..q.len() {
            assert!(q.links[i].len() <= 2);
            assert_eq!(q.row_sum(i), 0.0);
            assert!(q.rates(i).all(|(_, v)| v >= 0.0));
        }
        let total: f64 = q.masses().iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-2);
    }

    #[test]
    fn two_well_stationarity_and_saddle_row() {
        let (r, t) = setup(HamiltonianSpec::two_well());
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.05).unwrap();
        let scale = q.masses().iter().sum::<f64>() * q.max_rate;
        for v in q.stationarity_residual() {
            assert!(v.abs() <= 1e-10 * scale.max(1.0));
        }
        let s = r.graph.saddles().next().unwrap().id;
        assert_eq!(q.links[s].len(), 3);
    }

    #[test]
    fn semigroup_basics() {
        let (r, t) = setup(HamiltonianSpec::two_well());
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap();
        let f: Vec<f64> = q.cells.iter().map(|c| c.z.sin()).collect();
        assert_eq!(q.apply_semigroup(&f, 0.0, 0.01).unwrap(), f);
        let ones = vec![1.0; q.len()];
        for v in q.apply_semigroup(&ones, 0.7, 0.01).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let m = q.masses();
        let mean = m.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>();
        let late = q.apply_semigroup(&f, 200.0, 0.5).unwrap();
        for v in late {
            assert!((v - mean).abs() < 1e-6, "{v} vs {mean}");
        }
    }

    #[test]
    fn absorbing_cap_freezes_the_cap_value() {
        let (r, t) = setup(HamiltonianSpec::two_well());
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap().with_absorbing_cap();
        let f: Vec<f64> = q.cells.iter().map(|c| c.z.cos()).collect();
        let v = q.apply_semigroup(&f, 0.5, 0.01).unwrap();
        assert_eq!(v[q.cap_cell], f[q.cap_cell]);
        let top = q.point_of(q.cap_cell);
        let p = q.sample_path(top, 10.0, 3, 0);
        assert_eq!(p.cells, vec![q.cap_cell]);
        let ones = vec![1.0; q.len()];
        for x in q.apply_semigroup(&ones, 0.5, 0.01).unwrap() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn steady_state_satisfies_gluing() {
        let (r, t) = setup(HamiltonianSpec::two_well());
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.05).unwrap();
        let mins: Vec<usize> = r.graph.vertices.iter().filter(|v| v.kind == crate::reeb::VertexKind::Extremum).map(|v| v.id).collect();
        let f = q.steady_state(&[(mins[0], 1.0), (mins[1], 0.0)]).unwrap();
        let s = r.graph.saddles().next().unwrap().id;
        let flux = q.vertex_flux(&f, s);
        assert!(flux.abs() < 1e-10, "{flux}");
        // Not trivially constant.
        assert!((f[mins[0]] - f[s]).abs() > 1e-3);
    }

    #[test]
    fn reaction_with_linear_decay() {
        let (r, t) = setup(HamiltonianSpec::Radial);
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap();
        let f: Vec<f64> = q.cells.iter().map(|c| (2.0 * c.z).cos()).collect();
        let v = q.solve_reaction(&f, |x| -x, 0.5, 0.01).unwrap();
        let s = q.apply_semigroup(&f, 0.5, 0.01).unwrap();
        for (a, b) in v.iter().zip(&s) {
            assert!((a - (-0.5f64).exp() * b).abs() < 1e-6);
        }
        let c = vec![0.2; q.len()];
        let v = q.solve_reaction(&c, |x| 1.0 - x, 3.0, 0.01).unwrap();
        let want = 1.0 - 0.8 * (-3.0f64).exp();
        for x in v {
            assert!((x - want).abs() < 1e-6);
        }
        assert!(matches!(q.solve_reaction(&c, |x| x * x, 10.0, 0.01), Err(Error::Divergence { .. })));
    }

    #[test]
    fn matrix_market_header() {
        let (r, t) = setup(HamiltonianSpec::Radial);
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.25).unwrap();
        let mut buf = Vec::new();
        q.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n"));
    }
}
