//! Edge coefficients `T_k`, `α_k`, `S_k`, the averaging operator `∧`, the
//! lift `∨`, the weight `γ` and the weighted norms on the plane and graph.

use serde::{Deserialize, Serialize};

use crate::contour::{extract_level_curve, ContourOptions, CurveQuadrature};
use crate::exec::Exec;
use crate::hamiltonian::Hamiltonian;
use crate::interp::{linear, Pchip};
use crate::reeb::{GraphPoint, Reeb, ReebGraph, VertexKind};
use crate::{Error, Point, Result};

/// Sampling plan of the coefficient tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableOptions {
    /// Uniform samples in the interior of each edge.
    pub n_core: usize,
    /// Geometric levels `z_s ± Δ·2^{−l}` toward a saddle end.
    pub saddle_levels: usize,
    /// Geometric levels toward an extremum end.
    pub extremum_levels: usize,
    /// Upper bound on the refinement zone width `Δ`.
    pub zone: f64,
    /// Compute the area and vorticity cross-checks on core samples.
    pub cross_checks: bool,
    pub contour: ContourOptions,
    pub exec: Exec,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            n_core: 40,
            saddle_levels: 12,
            extremum_levels: 8,
            zone: 0.1,
            cross_checks: true,
            contour: ContourOptions::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "zone", rename_all = "snake_case")]
pub enum SampleZone {
    Core,
    /// Geometric refinement toward vertex `vertex` at level `level`.
    Refine { vertex: usize, level: u32 },
    /// The extremum itself, filled from the Hessian limit.
    Vertex { vertex: usize },
    /// The cap level `z_max`.
    Cap,
}

/// One tabulated level of an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: f64,
    pub zone: SampleZone,
    pub t: f64,
    pub alpha: f64,
    pub area: f64,
    /// Central difference `(S(z+δ) − S(z−δ)) / 2δ`.
    pub t_from_area: Option<f64>,
    /// `∫_{G_k(z)} ΔH dx` over the enclosed polygon.
    pub laplacian_integral: Option<f64>,
    #[serde(skip)]
    pub nodes: Vec<Point>,
    /// Weights of the invariant measure on the level curve.
    #[serde(skip)]
    pub mu: Vec<f64>,
}

impl Sample {
    /// `u^∧` at this level.
    pub fn average(&self, u: impl Fn(Point) -> f64) -> f64 {
        self.nodes.iter().zip(&self.mu).map(|(&p, w)| w * u(p)).sum()
    }

    pub fn is_computed(&self) -> bool {
        !matches!(self.zone, SampleZone::Vertex { .. })
    }
}

/// Least-squares fit `T ≈ c₀ + c₁|log|z − z_v||` near a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub vertex: usize,
    pub z_v: f64,
    pub c0: f64,
    pub c1: f64,
    /// Largest relative deviation of the fit over its samples.
    pub residual: f64,
    /// Standard error of `c₁`.
    pub c1_std_error: f64,
    pub samples: usize,
}

impl LogFit {
    pub fn eval(&self, z: f64) -> f64 {
        self.c0 + self.c1 * (z - self.z_v).abs().ln().abs()
    }
}

/// Coefficients of one edge.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub edge: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    pub samples: Vec<Sample>,
    /// Log fits at every vertex end that has a refinement zone.
    pub log_fits: Vec<LogFit>,
    saddle_terms: Vec<(f64, f64)>,
    remainder: Pchip,
    alpha: Pchip,
    area: Pchip,
    zs: Vec<f64>,
}

fn log_antiderivative(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u - u * u.abs().ln()
    }
}

impl EdgeTable {
    fn log_term(&self, z: f64) -> f64 {
        self.saddle_terms.iter().map(|&(zs, c1)| -c1 * (z - zs).abs().ln()).sum()
    }

    /// `T_k(z)`: tabulated values with the fitted log singularity at saddle
    /// ends split off before interpolation.
    pub fn t(&self, z: f64) -> f64 {
        if self.saddle_terms.iter().any(|&(zs, _)| zs == z) {
            return f64::INFINITY;
        }
        self.remainder.eval(z) + self.log_term(z)
    }

    pub fn alpha(&self, z: f64) -> f64 {
        self.alpha.eval(z)
    }

    pub fn area(&self, z: f64) -> f64 {
        self.area.eval(z)
    }

    /// `∫_a^b T_k dz`, exact for the interpolant.
    pub fn integral_t(&self, a: f64, b: f64) -> f64 {
        let logs: f64 = self
            .saddle_terms
            .iter()
            .map(|&(zs, c1)| c1 * (log_antiderivative(b - zs) - log_antiderivative(a - zs)))
            .sum();
        self.remainder.integrate(a, b) + logs
    }

    /// Levels of all samples, increasing.
    pub fn sample_zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn log_fit(&self, vertex: usize) -> Option<&LogFit> {
        self.log_fits.iter().find(|f| f.vertex == vertex)
    }

    /// `u^∧` at every sample.
    pub fn averages(&self, u: impl Fn(Point) -> f64) -> Vec<f64> {
        self.samples.iter().map(|s| s.average(&u)).collect()
    }

    /// `max T / min T` over the top tenth of the edge.
    pub fn top_decade_ratio(&self) -> f64 {
        let from = self.z_hi - 0.1 * (self.z_hi - self.z_lo);
        let ts: Vec<f64> = self.samples.iter().filter(|s| s.z >= from && s.is_computed()).map(|s| s.t).collect();
        let max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ts.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Fits `T ≈ c₀ + c₁|log|z − z_v||` on the refinement samples of `vertex`.
pub fn fit_log(samples: &[Sample], vertex: usize, z_v: f64) -> Result<LogFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| matches!(s.zone, SampleZone::Refine { vertex: v, .. } if v == vertex))
        .map(|s| ((s.z - z_v).abs().ln().abs(), s.t))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Precondition(format!(
            "log fit at vertex {vertex} needs at least 8 refinement samples, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let residual = pts.iter().map(|&(x, y)| ((c0 + c1 * x - y) / y).abs()).fold(0.0, f64::max);
    let rss: f64 = pts.iter().map(|&(x, y)| (c0 + c1 * x - y).powi(2)).sum();
    let c1_std_error = (rss / (n - 2.0) / sxx).sqrt();
    if residual > 0.05 {
        log::warn!("log fit at vertex {vertex}: residual {residual:.3} exceeds 5%");
    }
    Ok(LogFit { vertex, z_v, c0, c1, residual, c1_std_error, samples: pts.len() })
}

/// Coefficient tables for every edge of a Reeb graph.
#[derive(Debug, Clone)]
pub struct CoefficientTables {
    pub edges: Vec<EdgeTable>,
}

impl CoefficientTables {
    pub fn build(h: &Hamiltonian, reeb: &Reeb, opts: &TableOptions) -> Result<Self> {
        let g = &reeb.graph;
        let mut jobs: Vec<(usize, f64, SampleZone)> = Vec::new();
        for e in &g.edges {
            let width = e.z_hi - e.z_lo;
            for i in 1..=opts.n_core {
                jobs.push((e.id, e.z_lo + width * i as f64 / (opts.n_core + 1) as f64, SampleZone::Core));
            }
            let delta = opts.zone.min(0.2 * width);
            for (end, &v) in e.vertices.iter().enumerate() {
                let vert = &g.vertices[v];
                let dir = if end == 0 { 1.0 } else { -1.0 };
                let levels = match vert.kind {
                    VertexKind::Saddle => opts.saddle_levels,
                    VertexKind::Extremum => opts.extremum_levels,
                    VertexKind::Infinity => {
                        jobs.push((e.id, vert.z, SampleZone::Cap));
                        continue;
                    }
                };
                for l in 1..=levels {
                    let z = vert.z + dir * delta * 0.5f64.powi(l as i32);
                    jobs.push((e.id, z, SampleZone::Refine { vertex: v, level: l as u32 }));
                }
                if vert.kind == VertexKind::Extremum {
                    jobs.push((e.id, vert.z, SampleZone::Vertex { vertex: v }));
                }
            }
        }
        let samples = opts
            .exec
            .try_map(jobs.len(), |i| compute_sample(h, reeb, jobs[i].0, jobs[i].1, jobs[i].2, opts))?;

        let mut edges = Vec::new();
        for e in &g.edges {
            let mut own: Vec<Sample> = jobs
                .iter()
                .zip(&samples)
                .filter(|(j, _)| j.0 == e.id)
                .map(|(_, s)| s.clone())
                .collect();
            own.sort_by(|a, b| a.z.total_cmp(&b.z));
            own.dedup_by(|a, b| a.z == b.z);

            let mut log_fits = Vec::new();
            let mut saddle_terms = Vec::new();
            for &v in &e.vertices {
                let vert = &g.vertices[v];
                if vert.kind == VertexKind::Infinity {
                    continue;
                }
                let fit = fit_log(&own, v, vert.z)?;
                if vert.kind == VertexKind::Saddle {
                    saddle_terms.push((vert.z, fit.c1));
                }
                log_fits.push(fit);
            }
            let log_term = |z: f64| -> f64 { saddle_terms.iter().map(|&(zs, c1): &(f64, f64)| -c1 * (z - zs).abs().ln()).sum() };
            let mut rz: Vec<(f64, f64)> = own.iter().map(|s| (s.z, s.t - log_term(s.z))).collect();
            for fit in &log_fits {
                if g.vertices[fit.vertex].kind == VertexKind::Saddle {
                    let others: f64 = saddle_terms
                        .iter()
                        .filter(|&&(zs, _)| zs != fit.z_v)
                        .map(|&(zs, c1)| -c1 * (fit.z_v - zs).abs().ln())
                        .sum();
                    rz.push((fit.z_v, fit.c0 - others));
                }
            }
            rz.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (rx, ry): (Vec<f64>, Vec<f64>) = rz.into_iter().unzip();
            let zs: Vec<f64> = own.iter().map(|s| s.z).collect();
            let alpha = Pchip::new(zs.clone(), own.iter().map(|s| s.alpha).collect());
            let area = Pchip::new(zs.clone(), own.iter().map(|s| s.area).collect());
            for s in &own {
                if !(s.t.is_finite() && s.t > 0.0) || (s.zone == SampleZone::Core && !(s.alpha > 0.0)) {
                    return Err(Error::Table(format!("edge {} at z = {}: T = {}, α = {}", e.id, s.z, s.t, s.alpha)));
                }
            }
            edges.push(EdgeTable {
                edge: e.id,
                z_lo: e.z_lo,
                z_hi: e.z_hi,
                samples: own,
                log_fits,
                saddle_terms,
                remainder: Pchip::new(rx, ry),
                alpha,
                area,
                zs,
            });
        }
        Ok(Self { edges })
    }

    pub fn edge(&self, k: usize) -> &EdgeTable {
        &self.edges[k]
    }

    /// Fresh log fit at an edge end, with the residual warning.
    pub fn saddle_log_fit(&self, k: usize, vertex: usize) -> Result<LogFit> {
        let e = &self.edges[k];
        let z_v = e.log_fit(vertex).map(|f| f.z_v).ok_or_else(|| {
            Error::Precondition(format!("vertex {vertex} is not a refined end of edge {k}"))
        })?;
        fit_log(&e.samples, vertex, z_v)
    }
}

fn compute_sample(h: &Hamiltonian, reeb: &Reeb, k: usize, z: f64, zone: SampleZone, opts: &TableOptions) -> Result<Sample> {
    let g = &reeb.graph;
    if let SampleZone::Vertex { vertex } = zone {
        let x = g.vertices[vertex].location.expect("extremum vertex has a location");
        let hs = h.hessian(x);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        return Ok(Sample {
            z,
            zone,
            t: std::f64::consts::TAU / det.abs().sqrt(),
            alpha: 0.0,
            area: 0.0,
            t_from_area: None,
            laplacian_integral: None,
            nodes: vec![x],
            mu: vec![1.0],
        });
    }
    let curve = extract_level_curve(h, reeb, z, k, &opts.contour)?;
    let q = CurveQuadrature::new(h, &curve)?;
    let mut t_from_area = None;
    let mut laplacian_integral = None;
    if opts.cross_checks && zone == SampleZone::Core {
        let e = &g.edges[k];
        let gap = (z - e.z_lo).min(e.z_hi - z);
        let delta = (1e-2 * (e.z_hi - e.z_lo)).min(0.05 * gap);
        let up = extract_level_curve(h, reeb, z + delta, k, &opts.contour)?.area_with(h);
        let down = extract_level_curve(h, reeb, z - delta, k, &opts.contour)?.area_with(h);
        t_from_area = Some(((up - down) / (2.0 * delta)).abs());
        laplacian_integral = Some(curve.enclosed_integral(|x| h.laplacian(x)));
    }
    Ok(Sample {
        z,
        zone,
        t: q.period(),
        alpha: q.flux(),
        area: curve.area_with(h),
        t_from_area,
        laplacian_integral,
        mu: q.measure_weights(),
        nodes: q.nodes,
    })
}

/// `u^∧(z, k)` at an arbitrary level, from a freshly extracted curve.
pub fn average_at(h: &Hamiltonian, reeb: &Reeb, u: impl Fn(Point) -> f64, z: f64, k: usize, opts: &ContourOptions) -> Result<f64> {
    let curve = extract_level_curve(h, reeb, z, k, opts)?;
    Ok(CurveQuadrature::new(h, &curve)?.average(u))
}

/// The weight `γ(z, k) = h(z)`: `1` on `[0, z₀]`, a C² quintic blend on
/// `[z₀, 2z₀]`, then `½ exp(−λ(√t − √(2z₀)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub z0: f64,
    pub lambda: f64,
    blend: [f64; 6],
}

impl Weight {
    pub fn new(z0: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Parameter(format!("weight decay λ must be positive, got {lambda}")));
        }
        if !(z0 > 0.0) {
            return Err(Error::Parameter(format!("weight plateau z0 must be positive, got {z0}")));
        }
        let t1 = 2.0 * z0;
        let g = 0.5;
        let g1 = -g * lambda / (2.0 * t1.sqrt());
        let g2 = g * (lambda * lambda / (4.0 * t1) + lambda / (4.0 * t1.powf(1.5)));
        // a3 + a4 + a5 = g − 1, 3a3 + 4a4 + 5a5 = z0 g1, 6a3 + 12a4 + 20a5 = z0² g2.
        let (r1, r2, r3) = (g - 1.0, z0 * g1, z0 * z0 * g2);
        let a5 = (r3 - 6.0 * r2 + 12.0 * r1) / 2.0;
        let a4 = r2 - 3.0 * r1 - 2.0 * a5;
        let a3 = r1 - a4 - a5;
        let w = Self { z0, lambda, blend: [1.0, 0.0, 0.0, a3, a4, a5] };
        for i in 0..=10_000 {
            let t = z0 * (1.0 + i as f64 / 10_000.0);
            if w.dh(t) > 1e-14 {
                return Err(Error::Parameter(format!(
                    "weight blend is not decreasing for z0 = {z0}, λ = {lambda}; the tail entry slope is too shallow, raise λ or z0"
                )));
            }
        }
        Ok(w)
    }

    /// Picks `z₀` halfway between the top critical value and half the cap
    /// unless given.
    pub fn for_graph(graph: &ReebGraph, lambda: f64, z0: Option<f64>) -> Result<Self> {
        let top = graph.max_critical_value();
        let z0 = z0.unwrap_or_else(|| (top + 0.25 * (graph.z_max - top)).max(0.1 * graph.z_max));
        if !(z0 > top) {
            return Err(Error::Parameter(format!("weight plateau z0 = {z0} must exceed the top critical value {top}")));
        }
        Self::new(z0, lambda)
    }

    fn poly(&self, s: f64, d: usize) -> f64 {
        let a = &self.blend;
        match d {
            0 => a[0] + s * (a[1] + s * (a[2] + s * (a[3] + s * (a[4] + s * a[5])))),
            1 => a[1] + s * (2.0 * a[2] + s * (3.0 * a[3] + s * (4.0 * a[4] + s * 5.0 * a[5]))),
            _ => 2.0 * a[2] + s * (6.0 * a[3] + s * (12.0 * a[4] + s * 20.0 * a[5])),
        }
    }

    fn tail(&self, t: f64) -> f64 {
        0.5 * (-self.lambda * (t.sqrt() - (2.0 * self.z0).sqrt())).exp()
    }

    pub fn h(&self, t: f64) -> f64 {
        if t <= self.z0 {
            1.0
        } else if t < 2.0 * self.z0 {
            self.poly(t / self.z0 - 1.0, 0)
        } else {
            self.tail(t)
        }
    }

    pub fn dh(&self, t: f64) -> f64 {
        if t <= self.z0 {
            0.0
        } else if t < 2.0 * self.z0 {
            self.poly(t / self.z0 - 1.0, 1) / self.z0
        } else {
            -self.tail(t) * self.lambda / (2.0 * t.sqrt())
        }
    }

    pub fn d2h(&self, t: f64) -> f64 {
        if t <= self.z0 {
            0.0
        } else if t < 2.0 * self.z0 {
            self.poly(t / self.z0 - 1.0, 2) / (self.z0 * self.z0)
        } else {
            let l = self.lambda;
            self.tail(t) * (l * l / (4.0 * t) + l / (4.0 * t.powf(1.5)))
        }
    }

    /// `γ^∨(x) = h(H(x))`.
    pub fn lift(&self, h: &Hamiltonian, x: Point) -> f64 {
        self.h(h.value(x))
    }

    /// `Δγ^∨ = h''(H)|∇H|² + h'(H)ΔH`.
    pub fn lift_laplacian(&self, h: &Hamiltonian, x: Point) -> f64 {
        let z = h.value(x);
        let g = h.gradient(x);
        self.d2h(z) * (g[0] * g[0] + g[1] * g[1]) + self.dh(z) * h.laplacian(x)
    }

    /// Smallest `c` with `Δγ^∨ ≤ c γ^∨` on the given plane nodes.
    pub fn laplacian_constant(&self, h: &Hamiltonian, plane: &PlaneQuadrature) -> f64 {
        plane
            .nodes
            .iter()
            .map(|n| self.lift_laplacian(h, n.x) / self.h(n.z))
            .fold(0.0, f64::max)
    }
}

/// A function on the graph, sampled on the coefficient grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFunction {
    /// Values at each edge's sample levels.
    pub edges: Vec<Vec<f64>>,
    /// One value per vertex.
    pub vertices: Vec<f64>,
    /// Whether the edge limits agree at every vertex.
    pub continuous: bool,
}

impl GraphFunction {
    /// Samples `f(z, k)`; vertex values are the mean of the incident limits.
    pub fn from_fn(tables: &CoefficientTables, graph: &ReebGraph, f: impl Fn(f64, usize) -> f64) -> Self {
        let edges: Vec<Vec<f64>> = tables.edges.iter().map(|t| t.sample_zs().iter().map(|&z| f(z, t.edge)).collect()).collect();
        let mut gf = Self { edges, vertices: vec![], continuous: false };
        gf.vertices = gf.vertex_means(tables, graph);
        gf.continuous = gf.check_continuity(tables, graph, 1e-9);
        gf
    }

    /// `u^∧` on every sample; vertex values are the incident means.
    pub fn average_of(tables: &CoefficientTables, graph: &ReebGraph, u: impl Fn(Point) -> f64) -> Self {
        let edges = tables.edges.iter().map(|t| t.averages(&u)).collect();
        let mut gf = Self { edges, vertices: vec![], continuous: false };
        gf.vertices = gf.vertex_means(tables, graph);
        gf
    }

    fn limit(&self, tables: &CoefficientTables, graph: &ReebGraph, k: usize, v: usize) -> f64 {
        let e = &graph.edges[k];
        let vals = &self.edges[k];
        let _ = tables;
        if e.lower() == v {
            vals[0]
        } else {
            vals[vals.len() - 1]
        }
    }

    fn vertex_means(&self, tables: &CoefficientTables, graph: &ReebGraph) -> Vec<f64> {
        graph
            .vertices
            .iter()
            .map(|v| {
                let inc = graph.incident(v.id);
                inc.iter().map(|&k| self.limit(tables, graph, k, v.id)).sum::<f64>() / inc.len() as f64
            })
            .collect()
    }

    fn check_continuity(&self, tables: &CoefficientTables, graph: &ReebGraph, tol: f64) -> bool {
        graph.vertices.iter().all(|v| {
            graph
                .incident(v.id)
                .iter()
                .all(|&k| (self.limit(tables, graph, k, v.id) - self.vertices[v.id]).abs() <= tol)
        })
    }

    /// Linear interpolation along the edge.
    pub fn eval(&self, tables: &CoefficientTables, p: GraphPoint) -> f64 {
        linear(tables.edges[p.k].sample_zs(), &self.edges[p.k], p.z)
    }

    /// `f^∨(x) = f(Π(x))`.
    pub fn lift(&self, tables: &CoefficientTables, reeb: &Reeb, h: &Hamiltonian, x: Point) -> Result<f64> {
        let p = reeb.project(h, x)?;
        Ok(self.eval(tables, p))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            edges: self.edges.iter().map(|v| v.iter().map(|&x| f(x)).collect()).collect(),
            vertices: self.vertices.iter().map(|&x| f(x)).collect(),
            continuous: self.continuous,
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            edges: self.edges.iter().zip(&other.edges).map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()).collect(),
            vertices: self.vertices.iter().zip(&other.vertices).map(|(&x, &y)| f(x, y)).collect(),
            continuous: self.continuous && other.continuous,
        }
    }
}

/// Gauss nodes in `z` on every edge, weighted by `T_k(z) dz`.
#[derive(Debug, Clone)]
pub struct GraphQuadrature {
    /// `(z, k, T_k(z)·dz weight)`.
    pub nodes: Vec<(f64, usize, f64)>,
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

impl GraphQuadrature {
    pub fn new(tables: &CoefficientTables) -> Self {
        let mut nodes = Vec::new();
        for t in &tables.edges {
            let mut breaks = vec![t.z_lo];
            breaks.extend(t.sample_zs().iter().copied().filter(|&z| z > t.z_lo && z < t.z_hi));
            breaks.push(t.z_hi);
            breaks.dedup();
            for w in breaks.windows(2) {
                let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for &(x, wt) in &GL4 {
                    let z = c + r * x;
                    nodes.push((z, t.edge, r * wt * t.t(z)));
                }
            }
        }
        Self { nodes }
    }

    /// `Σ_k ∫ f g γ T_k dz`.
    pub fn inner(&self, tables: &CoefficientTables, weight: &Weight, f: &GraphFunction, g: &GraphFunction) -> f64 {
        self.integrate(weight, |z, k| {
            let p = GraphPoint { z, k };
            f.eval(tables, p) * g.eval(tables, p)
        })
    }

    pub fn norm(&self, tables: &CoefficientTables, weight: &Weight, f: &GraphFunction) -> f64 {
        self.inner(tables, weight, f, f).sqrt()
    }

    /// `Σ_k ∫ φ(z, k) γ T_k dz` for a function given directly.
    pub fn integrate(&self, weight: &Weight, phi: impl Fn(f64, usize) -> f64) -> f64 {
        self.nodes.iter().map(|&(z, k, w)| w * weight.h(z) * phi(z, k)).sum()
    }

    /// The admissibility integral `Σ_k ∫ γ T_k dz`.
    pub fn admissibility(&self, weight: &Weight) -> f64 {
        self.integrate(weight, |_, _| 1.0)
    }
}

/// One node of the plane quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneNode {
    pub x: Point,
    /// Cell area.
    pub w: f64,
    pub z: f64,
    pub k: usize,
}

/// Midpoint quadrature over `{H < z_max}`, with cells that straddle the cap
/// or an edge boundary split 4×4.
#[derive(Debug, Clone)]
pub struct PlaneQuadrature {
    pub nodes: Vec<PlaneNode>,
}

impl PlaneQuadrature {
    pub fn new(h: &Hamiltonian, reeb: &Reeb, n: usize, exec: Exec) -> Result<Self> {
        let b = h.bound();
        let step = 2.0 * b / n as f64;
        let z_max = reeb.z_max();
        let corner_label = |i: usize, j: usize| -> Option<usize> {
            let x = [-b + i as f64 * step, -b + j as f64 * step];
            if h.value(x) >= z_max {
                None
            } else {
                reeb.edge_of(h, x).ok()
            }
        };
        let rows: Vec<Vec<Option<usize>>> = exec.map(n + 1, |j| (0..=n).map(|i| corner_label(i, j)).collect());
        let per_row = exec.try_map(n, |j| -> Result<Vec<PlaneNode>> {
            let mut out = Vec::new();
            for i in 0..n {
                let c = [rows[j][i], rows[j][i + 1], rows[j + 1][i], rows[j + 1][i + 1]];
                let uniform = c.iter().all(|&l| l.is_some() && l == c[0]);
                let empty = c.iter().all(|l| l.is_none());
                let x0 = [-b + i as f64 * step, -b + j as f64 * step];
                if uniform {
                    let x = [x0[0] + 0.5 * step, x0[1] + 0.5 * step];
                    let z = h.value(x);
                    if z < z_max {
                        out.push(PlaneNode { x, w: step * step, z, k: c[0].unwrap() });
                    }
                    continue;
                }
                let centre = [x0[0] + 0.5 * step, x0[1] + 0.5 * step];
                if empty && h.value(centre) >= z_max {
                    continue;
                }
                let sub = 4;
                let hs = step / sub as f64;
                for b2 in 0..sub {
                    for a2 in 0..sub {
                        let x = [x0[0] + (a2 as f64 + 0.5) * hs, x0[1] + (b2 as f64 + 0.5) * hs];
                        let z = h.value(x);
                        if z >= z_max {
                            continue;
                        }
                        let k = reeb.edge_of(h, x)?;
                        out.push(PlaneNode { x, w: hs * hs, z, k });
                    }
                }
            }
            Ok(out)
        })?;
        Ok(Self { nodes: per_row.into_iter().flatten().collect() })
    }

    /// `∫ φ γ^∨ dx`, with `φ` given the node.
    pub fn integrate(&self, weight: &Weight, phi: impl Fn(&PlaneNode) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.w * weight.h(n.z) * phi(n)).sum()
    }

    pub fn norm(&self, weight: &Weight, u: impl Fn(Point) -> f64) -> f64 {
        self.integrate(weight, |n| u(n.x).powi(2)).sqrt()
    }

    /// Values of `f^∨` at the nodes.
    pub fn lift_values(&self, tables: &CoefficientTables, f: &GraphFunction) -> Vec<f64> {
        self.nodes.iter().map(|n| f.eval(tables, GraphPoint { z: n.z, k: n.k })).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::reeb::build_reeb;
    use std::f64::consts::PI;

    fn setup(spec: HamiltonianSpec) -> (Hamiltonian, Reeb, CoefficientTables) {
        let h = Hamiltonian::new(spec, 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, 2.0, 300).unwrap();
        let opts = TableOptions { n_core: 12, ..Default::default() };
        let t = CoefficientTables::build(&h, &r, &opts).unwrap();
        (h, r, t)
    }

    #[test]
    fn radial_closed_forms() {
        let (_, _, t) = setup(HamiltonianSpec::Radial);
        let e = t.edge(0);
        for s in e.samples.iter().filter(|s| s.is_computed()) {
            assert!((s.t - 2.0 * PI).abs() < 2e-3 * 2.0 * PI, "T({}) = {}", s.z, s.t);
            assert!((s.alpha - 4.0 * PI * s.z).abs() < 2e-3 * 4.0 * PI * s.z);
            assert!((s.area - 2.0 * PI * s.z).abs() < 1e-3 * 2.0 * PI * s.z);
        }
        assert!((e.integral_t(0.0, 2.0) - 4.0 * PI).abs() < 1e-2);
    }

    #[test]
    fn log_antiderivative_matches_quadrature() {
        let a: f64 = 0.3;
        let exact = log_antiderivative(a) - log_antiderivative(-0.1);
        let n = 200_000;
        let h = (a + 0.1) / n as f64;
        let num: f64 = (0..n).map(|i| -((-0.1 + (i as f64 + 0.5) * h).abs().ln()) * h).sum();
        assert!((exact - num).abs() < 1e-3);
    }

    #[test]
    fn two_well_saddle_fits_and_cross_checks() {
        let (_, r, t) = setup(HamiltonianSpec::two_well());
        let s = r.graph.saddles().next().unwrap().id;
        for k in r.graph.incident(s) {
            let fit = t.edge(k).log_fit(s).unwrap();
            assert!(fit.c1 > 0.0, "edge {k}: {fit:?}");
            assert!(fit.residual < 0.05, "edge {k}: {fit:?}");
        }
        for e in &t.edges {
            for smp in e.samples.iter().filter(|s| s.zone == SampleZone::Core) {
                let ta = smp.t_from_area.unwrap();
                assert!((smp.t - ta).abs() <= 0.01 * smp.t, "edge {} z {}: {} vs {}", e.edge, smp.z, smp.t, ta);
                let li = smp.laplacian_integral.unwrap();
                assert!((smp.alpha - li).abs() <= 0.01 * smp.alpha);
            }
        }
    }

    #[test]
    fn weight_shape() {
        let w = Weight::new(0.5, 2.0).unwrap();
        assert_eq!(w.h(0.3), 1.0);
        assert_eq!(w.h(0.5), 1.0);
        assert!((w.h(1.0) - 0.5).abs() < 1e-15);
        let e = 1e-7;
        for t in [0.5, 1.0] {
            assert!((w.h(t + e) - w.h(t - e)).abs() < 1e-6);
            assert!((w.dh(t + e) - w.dh(t - e)).abs() < 1e-5);
            assert!((w.d2h(t + e) - w.d2h(t - e)).abs() < 1e-4);
        }
        for i in 0..10_000 {
            assert!(w.dh(3.0 * i as f64 / 10_000.0) <= 1e-14);
        }
        assert!(Weight::new(0.5, 0.0).is_err());
    }

    #[test]
    fn lift_and_average_are_inverse_on_samples() {
        let (h, r, t) = setup(HamiltonianSpec::two_well());
        let f = GraphFunction::from_fn(&t, &r.graph, |z, k| (z + k as f64).sin());
        for e in &t.edges {
            for (i, s) in e.samples.iter().enumerate() {
                let back = s.average(|x| f.lift(&t, &r, &h, x).unwrap());
                assert!((back - f.edges[e.edge][i]).abs() < 1e-3, "edge {} z {}", e.edge, s.z);
            }
        }
    }
}
