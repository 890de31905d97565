//! Level curves `C_k(z)` by marching squares and line integrals over them.

use serde::{Deserialize, Serialize};

use crate::hamiltonian::{spectral_norm, Hamiltonian};
use crate::reeb::{Label, Reeb, VertexKind};
use crate::{Error, Point, Result};

/// Options for [`extract_level_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    /// Cells along the longer side of the local marching-squares grid.
    pub resolution: usize,
    /// Levels closer than this (relative) to a saddle value are rejected.
    pub near_singular: f64,
    /// Absolute tolerance on `H − z` for curve vertices.
    pub level_tol: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { resolution: 200, near_singular: 1e-9, level_tol: 1e-12 }
    }
}

/// One connected component of a level set, as a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCurve {
    pub z: f64,
    pub points: Vec<Point>,
    pub closed: bool,
}

impl LevelCurve {
    fn segment(&self, i: usize) -> f64 {
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    fn segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len().saturating_sub(1)
        }
    }

    pub fn length(&self) -> f64 {
        (0..self.segments()).map(|i| self.segment(i)).sum()
    }

    /// Trapezoid weights `½(l_{i−1} + l_i)` for each vertex.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut w = vec![0.0; n];
        for i in 0..self.segments() {
            let l = 0.5 * self.segment(i);
            w[i] += l;
            w[(i + 1) % n] += l;
        }
        w
    }

    /// `∮ f dl` by the trapezoid rule.
    pub fn line_integral(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(self.weights()).map(|(&p, w)| w * f(p)).sum()
    }

    /// Shoelace area, positive for counter-clockwise orientation.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            s += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Enclosed area of the true curve: the polygon area plus, for each
    /// chord, the parabolic segment `⅔·l·s` cut off by its sagitta `s`.
    pub fn area_with(&self, h: &Hamiltonian) -> f64 {
        let ccw = if self.signed_area() >= 0.0 { 1.0 } else { -1.0 };
        let n = self.points.len();
        let mut extra = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let l = (a[0] - b[0]).hypot(a[1] - b[1]);
            if l == 0.0 {
                continue;
            }
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let outward = [ccw * (b[1] - a[1]) / l, -ccw * (b[0] - a[0]) / l];
            let p = project_along(h, self.z, m, outward, l, 1e-13);
            let s = (p[0] - m[0]) * outward[0] + (p[1] - m[1]) * outward[1];
            extra += 2.0 / 3.0 * l * s;
        }
        self.area() + extra
    }

    /// Even-odd point-in-polygon test.
    pub fn encloses(&self, x: Point) -> bool {
        let n = self.points.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[j]);
            if (a[1] > x[1]) != (b[1] > x[1]) && x[0] < (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// `∫ f dx` over the enclosed polygon, by signed triangles fanned from
    /// the centroid with a degree-5 rule on each.
    pub fn enclosed_integral(&self, f: impl Fn(Point) -> f64) -> f64 {
        let n = self.points.len() as f64;
        let c = self.points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
        let mut total = 0.0;
        let m = self.points.len();
        for i in 0..m {
            let a = self.points[i];
            let b = self.points[(i + 1) % m];
            let signed = 0.5 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]));
            let mut q = 0.0;
            for &(w, l0, l1, l2) in &DUNAVANT5 {
                let x = [l0 * c[0] + l1 * a[0] + l2 * b[0], l0 * c[1] + l1 * a[1] + l2 * b[1]];
                q += w * f(x);
            }
            total += signed * q;
        }
        total.abs()
    }
}

// Seven-point degree-5 triangle rule (weights sum to 1).
const DUNAVANT5: [(f64, f64, f64, f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506;
    const W2: f64 = 0.125_939_180_544_827;
    [
        (W0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        (W1, A1, B1, B1),
        (W1, B1, A1, B1),
        (W1, B1, B1, A1),
        (W2, A2, B2, B2),
        (W2, B2, A2, B2),
        (W2, B2, B2, A2),
    ]
};

/// Quadrature data of a closed level curve: nodes, arc weights and `|∇H|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveQuadrature {
    pub nodes: Vec<Point>,
    pub arc_weights: Vec<f64>,
    pub grad_norms: Vec<f64>,
}

impl CurveQuadrature {
    pub fn new(h: &Hamiltonian, curve: &LevelCurve) -> Result<Self> {
        let arc_weights = curve.weights();
        let mut grad_norms = Vec::with_capacity(curve.points.len());
        for &p in &curve.points {
            let g = h.gradient(p);
            let norm = g[0].hypot(g[1]);
            if norm < 1e-9 {
                return Err(Error::SingularIntegrand { point: p, grad_norm: norm });
            }
            grad_norms.push(norm);
        }
        Ok(Self { nodes: curve.points.clone(), arc_weights, grad_norms })
    }

    /// `T = ∮ dl / |∇H|`.
    pub fn period(&self) -> f64 {
        self.arc_weights.iter().zip(&self.grad_norms).map(|(w, g)| w / g).sum()
    }

    /// `α = ∮ |∇H| dl`.
    pub fn flux(&self) -> f64 {
        self.arc_weights.iter().zip(&self.grad_norms).map(|(w, g)| w * g).sum()
    }

    /// Weights of the invariant probability measure `dl / (T |∇H|)`.
    pub fn measure_weights(&self) -> Vec<f64> {
        let t = self.period();
        self.arc_weights.iter().zip(&self.grad_norms).map(|(w, g)| w / (g * t)).collect()
    }

    /// `u^∧ = (1/T) ∮ u / |∇H| dl`.
    pub fn average(&self, u: impl Fn(Point) -> f64) -> f64 {
        let t = self.period();
        self.nodes
            .iter()
            .zip(self.arc_weights.iter().zip(&self.grad_norms))
            .map(|(&p, (w, g))| w / g * u(p))
            .sum::<f64>()
            / t
    }
}

/// Extracts `C_k(z)`.
pub fn extract_level_curve(h: &Hamiltonian, reeb: &Reeb, z: f64, k: usize, opts: &ContourOptions) -> Result<LevelCurve> {
    let g = &reeb.graph;
    let edge = g.edges.get(k).ok_or_else(|| Error::Parameter(format!("no edge {k}")))?;
    let at_cap = g.vertices[edge.upper()].kind == VertexKind::Infinity && z == edge.z_hi;
    if !(z > edge.z_lo && (z < edge.z_hi || at_cap)) {
        return Err(Error::Contour { z, edge: k, reason: format!("level outside ({}, {})", edge.z_lo, edge.z_hi) });
    }
    for &v in &edge.vertices {
        let vert = &g.vertices[v];
        if vert.kind == VertexKind::Saddle && (z - vert.z).abs() <= opts.near_singular * (1.0 + vert.z.abs()) {
            return Err(Error::NearSingular { z, edge: k });
        }
    }
    let signature: Vec<Point> = g
        .interior_vertices(k)
        .into_iter()
        .filter_map(|v| g.vertices[v].location)
        .collect();

    let (mut lo, mut hi) = seed_box(h, reeb, z, k)?;
    let mut pad = 0.1 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    for _ in 0..4 {
        let blo = [(lo[0] - pad).max(-h.bound()), (lo[1] - pad).max(-h.bound())];
        let bhi = [(hi[0] + pad).min(h.bound()), (hi[1] + pad).min(h.bound())];
        let anchor = edge
            .vertices
            .iter()
            .map(|&v| &g.vertices[v])
            .find(|v| v.kind == VertexKind::Saddle)
            .and_then(|v| v.location);
        let loops = march(h, z, blo, bhi, anchor, opts);
        let mut open_hit = false;
        for mut c in loops {
            if !c.closed {
                open_hit = true;
                continue;
            }
            let matches = signature.len()
                == signature.iter().filter(|&&p| c.encloses(p)).count()
                && reeb
                    .critical_points
                    .iter()
                    .filter(|p| c.encloses(p.location))
                    .count()
                    == signature.len();
            if matches {
                refine(h, &mut c, opts, (bhi[0] - blo[0]).max(bhi[1] - blo[1]) / opts.resolution as f64)?;
                if c.signed_area() < 0.0 {
                    c.points.reverse();
                }
                return Ok(c);
            }
        }
        if !open_hit && blo[0] <= -h.bound() && blo[1] <= -h.bound() && bhi[0] >= h.bound() && bhi[1] >= h.bound() {
            break;
        }
        lo = blo;
        hi = bhi;
        pad *= 2.0;
    }
    Err(Error::Contour { z, edge: k, reason: "no closed component with the edge's enclosed critical points".into() })
}

/// Bounding box of the atlas cells straddling `z` that belong to edge `k`
/// or to a band of its endpoints, widened by a Hessian box at extremum
/// endpoints for loops too small for the atlas.
fn seed_box(h: &Hamiltonian, reeb: &Reeb, z: f64, k: usize) -> Result<(Point, Point)> {
    let atlas = &reeb.atlas;
    let g = &reeb.graph;
    let edge = &g.edges[k];
    let ours = |l: Label| match l {
        Label::Edge(e) => e == k,
        Label::Band(v) => edge.vertices.contains(&v),
        Label::Outside => false,
    };
    let n = atlas.n();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut cells = 0usize;
    let values: Vec<f64> = (0..=n).flat_map(|j| (0..=n).map(move |i| (i, j))).map(|(i, j)| h.value(atlas.node(i, j))).collect();
    let v = |i: usize, j: usize| values[j * (n + 1) + i];
    for j in 0..n {
        for i in 0..n {
            let c = [v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1)];
            let below = c.iter().any(|&x| x < z);
            let above = c.iter().any(|&x| x >= z);
            if !(below && above) {
                continue;
            }
            let labels = [atlas.label(i, j), atlas.label(i + 1, j), atlas.label(i, j + 1), atlas.label(i + 1, j + 1)];
            if !labels.iter().any(|&l| ours(l)) {
                continue;
            }
            cells += 1;
            for p in [atlas.node(i, j), atlas.node(i + 1, j + 1)] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
        }
    }
    if cells < 16 {
        for &vid in &edge.vertices {
            let vert = &g.vertices[vid];
            if vert.kind != VertexKind::Extremum {
                continue;
            }
            let c = vert.location.expect("extremum has a location");
            let hs = h.hessian(c);
            let tr = 0.5 * (hs[0][0] + hs[1][1]);
            let d = (0.25 * (hs[0][0] - hs[1][1]).powi(2) + hs[0][1] * hs[1][0]).max(0.0).sqrt();
            let lam_min = (tr.abs() - d).abs().max(1e-12);
            let r = 1.5 * (2.0 * (z - vert.z).abs() / lam_min).sqrt() + 2.0 * atlas.spacing();
            lo = [lo[0].min(c[0] - r), lo[1].min(c[1] - r)];
            hi = [hi[0].max(c[0] + r), hi[1].max(c[1] + r)];
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::Contour { z, edge: k, reason: "level not found on the atlas".into() });
    }
    Ok((lo, hi))
}

/// Root of `H − z` on the segment `a → b`, given a sign change.
fn root_on_segment(h: &Hamiltonian, z: f64, a: Point, b: Point, fa: f64, fb: f64, tol: f64) -> Point {
    let (mut t0, mut t1, mut f0, mut f1) = (0.0f64, 1.0f64, fa, fb);
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut t = f0 / (f0 - f1);
    for it in 0..100 {
        let ft = h.value(at(t)) - z;
        if ft.abs() <= tol || (t1 - t0) < 1e-16 {
            break;
        }
        if (ft < 0.0) == (f0 < 0.0) {
            t0 = t;
            f0 = ft;
        } else {
            t1 = t;
            f1 = ft;
        }
        // Regula falsi with bisection every third step to avoid stalling.
        t = if it % 3 == 2 { 0.5 * (t0 + t1) } else { t0 + f0 * (t1 - t0) / (f0 - f1) };
    }
    at(t)
}

/// Marching squares on a local grid over `[lo, hi]`, with a grid node at
/// `anchor` when given. Returns all stitched components.
fn march(h: &Hamiltonian, z: f64, lo: Point, hi: Point, anchor: Option<Point>, opts: &ContourOptions) -> Vec<LevelCurve> {
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let step = span / opts.resolution as f64;
    let mut origin = lo;
    if let Some(a) = anchor {
        for d in 0..2 {
            origin[d] = a[d] - ((a[d] - lo[d]) / step).ceil() * step;
        }
    }
    let nx = ((hi[0] - origin[0]) / step).ceil() as usize + 1;
    let ny = ((hi[1] - origin[1]) / step).ceil() as usize + 1;
    let node = |i: usize, j: usize| [origin[0] + i as f64 * step, origin[1] + j as f64 * step];
    let f: Vec<f64> = (0..=ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| h.value(node(i, j)) - z).collect();
    let val = |i: usize, j: usize| f[j * (nx + 1) + i];

    // Grid edges: horizontal (i,j)-(i+1,j) and vertical (i,j)-(i,j+1).
    let hid = |i: usize, j: usize| 2 * (j * (nx + 1) + i);
    let vid = |i: usize, j: usize| 2 * (j * (nx + 1) + i) + 1;
    let mut crossing = std::collections::HashMap::new();
    let mut cross = |id: usize, a: (usize, usize), b: (usize, usize)| -> usize {
        crossing.entry(id).or_insert_with(|| {
            root_on_segment(h, z, node(a.0, a.1), node(b.0, b.1), val(a.0, a.1), val(b.0, b.1), opts.level_tol)
        });
        id
    };
    let mut links: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    let mut link = |a: usize, b: usize| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for j in 0..ny {
        for i in 0..nx {
            let pos = |v: f64| v >= 0.0;
            let (s0, s1, s2, s3) = (pos(val(i, j)), pos(val(i + 1, j)), pos(val(i + 1, j + 1)), pos(val(i, j + 1)));
            let case = (s0 as u8) | (s1 as u8) << 1 | (s2 as u8) << 2 | (s3 as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let bottom = || (hid(i, j), (i, j), (i + 1, j));
            let right = || (vid(i + 1, j), (i + 1, j), (i + 1, j + 1));
            let top = || (hid(i, j + 1), (i, j + 1), (i + 1, j + 1));
            let left = || (vid(i, j), (i, j), (i, j + 1));
            let mut seg = |e1: (usize, (usize, usize), (usize, usize)), e2: (usize, (usize, usize), (usize, usize))| {
                let a = cross(e1.0, e1.1, e1.2);
                let b = cross(e2.0, e2.1, e2.2);
                link(a, b);
            };
            match case {
                1 | 14 => seg(left(), bottom()),
                2 | 13 => seg(bottom(), right()),
                3 | 12 => seg(left(), right()),
                4 | 11 => seg(right(), top()),
                6 | 9 => seg(bottom(), top()),
                7 | 8 => seg(left(), top()),
                5 | 10 => {
                    let c = [origin[0] + (i as f64 + 0.5) * step, origin[1] + (j as f64 + 0.5) * step];
                    let centre_pos = h.value(c) - z >= 0.0;
                    // Corners 0 and 2 share a sign; the centre decides whether
                    // they are joined through the cell.
                    if centre_pos == s0 {
                        seg(left(), top());
                        seg(bottom(), right());
                    } else {
                        seg(left(), bottom());
                        seg(right(), top());
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut used = std::collections::HashSet::new();
    let mut curves = Vec::new();
    let mut keys: Vec<usize> = links.keys().copied().collect();
    keys.sort_unstable();
    // Open chains first start from their ends.
    keys.sort_by_key(|k| links[k].len() != 1);
    for start in keys {
        if used.contains(&start) {
            continue;
        }
        let mut chain = vec![start];
        used.insert(start);
        let mut prev = usize::MAX;
        let mut cur = start;
        let mut closed = false;
        loop {
            let next = links[&cur].iter().copied().find(|&n| n != prev && (!used.contains(&n) || (n == start && chain.len() > 2)));
            match next {
                Some(n) if n == start => {
                    closed = true;
                    break;
                }
                Some(n) => {
                    used.insert(n);
                    chain.push(n);
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        let points = chain.iter().map(|id| crossing[id]).collect();
        curves.push(LevelCurve { z, points, closed });
    }
    curves
}

/// Subdivides segments that are long relative to the local curvature
/// scale, projecting new points onto `H = z`.
fn refine(h: &Hamiltonian, c: &mut LevelCurve, opts: &ContourOptions, l_max: f64) -> Result<()> {
    let z = c.z;
    let mut out: Vec<Point> = Vec::with_capacity(c.points.len() * 2);
    let n = c.points.len();
    for i in 0..n {
        let a = c.points[i];
        let b = c.points[(i + 1) % n];
        out.push(a);
        subdivide(h, z, a, b, l_max, opts.level_tol, 0, &mut out);
    }
    out.dedup_by(|a, b| (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-14);
    if out.len() > 2 && (out[0][0] - out[out.len() - 1][0]).hypot(out[0][1] - out[out.len() - 1][1]) < 1e-14 {
        out.pop();
    }
    if out.len() < 3 {
        return Err(Error::Contour { z, edge: usize::MAX, reason: "degenerate curve".into() });
    }
    c.points = out;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn subdivide(h: &Hamiltonian, z: f64, a: Point, b: Point, l_max: f64, tol: f64, depth: u32, out: &mut Vec<Point>) {
    let len = (a[0] - b[0]).hypot(a[1] - b[1]);
    let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let g = h.gradient(m);
    let scale = 0.1 * g[0].hypot(g[1]) / spectral_norm(h.hessian(m)).max(1e-300);
    if depth >= 40 || len <= 1e-10 || len <= l_max.min(scale) {
        return;
    }
    let normal = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
    let p = project_along(h, z, m, normal, len, tol);
    subdivide(h, z, a, p, l_max, tol, depth + 1, out);
    out.push(p);
    subdivide(h, z, p, b, l_max, tol, depth + 1, out);
}

/// Nearest point of `H = z` on the line `m + t·n`, falling back to a
/// gradient Newton iteration from `m`.
fn project_along(h: &Hamiltonian, z: f64, m: Point, n: Point, len: f64, tol: f64) -> Point {
    let at = |t: f64| [m[0] + t * n[0], m[1] + t * n[1]];
    let f0 = h.value(m) - z;
    if f0.abs() <= tol {
        return m;
    }
    let mut t = 0.0625 * len;
    for _ in 0..6 {
        for s in [t, -t] {
            let fs = h.value(at(s)) - z;
            if (fs < 0.0) != (f0 < 0.0) {
                return root_on_segment(h, z, m, at(s), f0, fs, tol);
            }
        }
        t *= 2.0;
    }
    let mut x = m;
    for _ in 0..50 {
        let f = h.value(x) - z;
        if f.abs() <= tol {
            break;
        }
        let g = h.gradient(x);
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 < 1e-300 {
            break;
        }
        x = [x[0] - f * g[0] / g2, x[1] - f * g[1] / g2];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::reeb::build_reeb;
    use std::f64::consts::PI;

    fn setup(spec: HamiltonianSpec) -> (Hamiltonian, Reeb) {
        let h = Hamiltonian::new(spec, 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, 2.0, 300).unwrap();
        (h, r)
    }

    #[test]
    fn radial_unit_circle() {
        let (h, r) = setup(HamiltonianSpec::Radial);
        let c = extract_level_curve(&h, &r, 0.5, 0, &ContourOptions::default()).unwrap();
        assert!(c.closed);
        assert!((c.length() - 2.0 * PI).abs() < 2e-3 * PI);
        for p in &c.points {
            assert!((h.value(*p) - 0.5).abs() <= 1e-6 * 1.5);
        }
        let q = CurveQuadrature::new(&h, &c).unwrap();
        assert!((q.period() - 2.0 * PI).abs() < 1e-3);
        assert!((q.flux() - 4.0 * PI * 0.5).abs() < 1e-3);
        assert!((c.area() - PI).abs() < 1e-3);
        assert!(q.average(|x| x[0]).abs() < 1e-10);
        assert!((q.average(|x| h.value(x)) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn anisotropic_period_is_pi() {
        let (h, r) = setup(HamiltonianSpec::anisotropic());
        for z in [0.05, 0.5, 1.5] {
            let c = extract_level_curve(&h, &r, z, 0, &ContourOptions::default()).unwrap();
            let q = CurveQuadrature::new(&h, &c).unwrap();
            assert!((q.period() - PI).abs() < 1e-3 * PI, "z = {z}: {}", q.period());
        }
    }

    #[test]
    fn two_well_components() {
        let (h, r) = setup(HamiltonianSpec::two_well());
        let g = &r.graph;
        let s = g.saddles().next().unwrap();
        let outer = g.infinity_edge();
        for k in g.incident(s.id) {
            let e = &g.edges[k];
            let z = 0.5 * (e.z_lo + e.z_hi.min(1.0));
            let c = extract_level_curve(&h, &r, z, k, &ContourOptions::default()).unwrap();
            let enclosed: Vec<_> = r.critical_points.iter().filter(|p| c.encloses(p.location)).collect();
            if k == outer {
                assert_eq!(enclosed.len(), 3);
            } else {
                assert_eq!(enclosed.len(), 1);
                assert!(!c.encloses(s.location.unwrap()));
            }
        }
        // Very close to the saddle level on both sides.
        for k in g.incident(s.id) {
            let z = if k == outer { s.z + 1e-5 } else { s.z - 1e-5 };
            let c = extract_level_curve(&h, &r, z, k, &ContourOptions::default()).unwrap();
            assert!(c.points.iter().all(|&p| (h.value(p) - z).abs() < 1e-6 * (1.0 + z)));
        }
    }

    #[test]
    fn near_saddle_level_is_rejected() {
        let (h, r) = setup(HamiltonianSpec::two_well());
        let s = r.graph.saddles().next().unwrap();
        let k = r.graph.infinity_edge();
        assert!(matches!(
            extract_level_curve(&h, &r, s.z + 1e-13, k, &ContourOptions::default()),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn fan_integral_of_constant_is_area() {
        let (h, r) = setup(HamiltonianSpec::Radial);
        let c = extract_level_curve(&h, &r, 1.0, 0, &ContourOptions::default()).unwrap();
        assert!((c.enclosed_integral(|_| 1.0) - c.area()).abs() < 1e-12);
    }
}
