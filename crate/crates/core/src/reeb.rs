//! The Reeb graph of `H`: one edge per family of level-set components,
//! the region atlas that labels every grid node, and the projection `Π`.

use std::collections::{BinaryHeap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::hamiltonian::{CriticalKind, CriticalPoint, Hamiltonian};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    Extremum,
    Saddle,
    Infinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    /// Critical value, or `z_max` for the cap vertex.
    pub z: f64,
    /// Index into the critical point list; `None` for the cap vertex.
    pub critical_point: Option<usize>,
    pub location: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    /// Lower and upper endpoint vertex ids.
    pub vertices: [usize; 2],
    /// Incidence sign at each endpoint: +1 where H increases toward it.
    pub signs: [i8; 2],
}

impl Edge {
    pub fn lower(&self) -> usize {
        self.vertices[0]
    }

    pub fn upper(&self) -> usize {
        self.vertices[1]
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_lo && z <= self.z_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReebGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub z_max: f64,
}

/// A point `(z, k)` of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub z: f64,
    pub k: usize,
}

/// Result of projecting a plane point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: GraphPoint,
    /// Set when `x` lies on a separatrix; the edge is then one of the
    /// incident edges of this saddle vertex, chosen arbitrarily.
    pub vertex: Option<usize>,
}

impl ReebGraph {
    /// Edge ids incident to vertex `v`.
    pub fn incident(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.vertices.contains(&v)).map(|e| e.id).collect()
    }

    /// Incidence sign of edge `k` at vertex `v` (0 if not incident).
    pub fn sign(&self, k: usize, v: usize) -> i8 {
        let e = &self.edges[k];
        if e.vertices[0] == v {
            e.signs[0]
        } else if e.vertices[1] == v {
            e.signs[1]
        } else {
            0
        }
    }

    pub fn saddles(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(|v| v.kind == VertexKind::Saddle)
    }

    pub fn infinity_edge(&self) -> usize {
        self.edges
            .iter()
            .find(|e| self.vertices[e.upper()].kind == VertexKind::Infinity)
            .map(|e| e.id)
            .expect("validated graph has an infinity edge")
    }

    /// Vertices on the far side of edge `k` from the cap. On the plane these
    /// are exactly the critical points enclosed by every curve `C_k(z)`.
    pub fn interior_vertices(&self, k: usize) -> Vec<usize> {
        let e = &self.edges[k];
        let cap = self.vertices.iter().find(|v| v.kind == VertexKind::Infinity).map(|v| v.id);
        let mut best = Vec::new();
        for start in e.vertices {
            let mut seen = vec![false; self.vertices.len()];
            seen[start] = true;
            let mut stack = vec![start];
            let mut hits_cap = false;
            while let Some(v) = stack.pop() {
                hits_cap |= Some(v) == cap;
                for other in &self.edges {
                    if other.id == k {
                        continue;
                    }
                    for (a, b) in [(other.vertices[0], other.vertices[1]), (other.vertices[1], other.vertices[0])] {
                        if a == v && !seen[b] {
                            seen[b] = true;
                            stack.push(b);
                        }
                    }
                }
            }
            if !hits_cap {
                best = (0..self.vertices.len()).filter(|&v| seen[v]).collect();
            }
        }
        best
    }

    /// The largest critical value.
    pub fn max_critical_value(&self) -> f64 {
        self.vertices
            .iter()
            .filter(|v| v.kind != VertexKind::Infinity)
            .map(|v| v.z)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shortest path length through the graph, measured in `|Δz|`.
    pub fn distance(&self, p: GraphPoint, q: GraphPoint) -> f64 {
        if p.k == q.k {
            return (p.z - q.z).abs();
        }
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for &a in &self.edges[p.k].vertices {
            let da = self.vertex_distances(a);
            debug_assert_eq!(da.len(), n);
            for &b in &self.edges[q.k].vertices {
                let total = (p.z - self.vertices[a].z).abs() + da[b] + (self.vertices[b].z - q.z).abs();
                best = best.min(total);
            }
        }
        best
    }

    /// Dijkstra distances from vertex `src` to every vertex.
    pub fn vertex_distances(&self, src: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Item {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                o.0.total_cmp(&self.0)
            }
        }
        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::from([Item(0.0, src)]);
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for e in &self.edges {
                let other = match e.vertices {
                    [a, b] if a == v => b,
                    [a, b] if b == v => a,
                    _ => continue,
                };
                let nd = d + (e.z_hi - e.z_lo);
                if nd < dist[other] {
                    dist[other] = nd;
                    heap.push(Item(nd, other));
                }
            }
        }
        dist
    }

    fn validate(&self) -> Result<()> {
        let mut infinity = 0;
        for v in &self.vertices {
            let deg = self.incident(v.id).len();
            let want = match v.kind {
                VertexKind::Saddle => 3,
                VertexKind::Extremum | VertexKind::Infinity => 1,
            };
            if deg != want {
                return Err(Error::Reeb(format!(
                    "{:?} vertex {} at z = {} has {deg} incident edges, expected {want}",
                    v.kind, v.id, v.z
                )));
            }
            if v.kind == VertexKind::Infinity {
                infinity += 1;
            }
        }
        if infinity != 1 {
            return Err(Error::Reeb(format!("expected one cap vertex, found {infinity}")));
        }
        Ok(())
    }
}

/// Node label of the atlas grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Edge(usize),
    /// Inside the critical band of the given saddle vertex.
    Band(usize),
    /// `H ≥ z_max`.
    Outside,
}

const OUTSIDE: i32 = -1;

fn encode(l: Label) -> i32 {
    match l {
        Label::Edge(k) => k as i32,
        Label::Outside => OUTSIDE,
        Label::Band(v) => -2 - v as i32,
    }
}

fn decode(c: i32) -> Label {
    match c {
        c if c >= 0 => Label::Edge(c as usize),
        OUTSIDE => Label::Outside,
        c => Label::Band((-2 - c) as usize),
    }
}

/// Labels of a uniform node grid over `[−R, R]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAtlas {
    bound: f64,
    n: usize,
    labels: Vec<i32>,
}

impl RegionAtlas {
    /// Number of cells per side; there are `n + 1` nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.bound / self.n as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = self.spacing();
        [-self.bound + i as f64 * h, -self.bound + j as f64 * h]
    }

    pub fn label(&self, i: usize, j: usize) -> Label {
        decode(self.labels[j * (self.n + 1) + i])
    }

    /// Lower-left node of the cell containing `x`.
    pub fn cell_of(&self, x: Point) -> Option<(usize, usize)> {
        let h = self.spacing();
        let fi = (x[0] + self.bound) / h;
        let fj = (x[1] + self.bound) / h;
        if !(fi >= 0.0 && fj >= 0.0 && fi <= self.n as f64 && fj <= self.n as f64) {
            return None;
        }
        Some(((fi as usize).min(self.n - 1), (fj as usize).min(self.n - 1)))
    }

    /// Labels of the four corners of the cell containing `x`.
    pub fn corner_labels(&self, x: Point) -> Option<[Label; 4]> {
        let (i, j) = self.cell_of(x)?;
        Some([self.label(i, j), self.label(i + 1, j), self.label(i, j + 1), self.label(i + 1, j + 1)])
    }

    /// Node index ranges `(i0, i1, j0, j1)` spanned by the nodes labelled `l`.
    pub fn extent(&self, l: Label) -> Option<(usize, usize, usize, usize)> {
        let code = encode(l);
        let mut ext: Option<(usize, usize, usize, usize)> = None;
        for j in 0..=self.n {
            for i in 0..=self.n {
                if self.labels[j * (self.n + 1) + i] == code {
                    ext = Some(match ext {
                        None => (i, i, j, j),
                        Some((a, b, c, d)) => (a.min(i), b.max(i), c.min(j), d.max(j)),
                    });
                }
            }
        }
        ext
    }

    /// Number of nodes per label code, for edges `0..edges`.
    pub fn edge_node_counts(&self, edges: usize) -> Vec<usize> {
        let mut counts = vec![0; edges];
        for &c in &self.labels {
            if c >= 0 {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    const MAGIC: &'static [u8; 8] = b"REEBATL1";

    /// Writes the atlas as a little-endian binary grid with a header.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&self.bound.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for &c in &self.labels {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(bad("not an atlas file"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let bound = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n == 0 || n > 1 << 16 {
            return Err(bad("implausible atlas resolution"));
        }
        let mut labels = vec![0i32; (n + 1) * (n + 1)];
        let mut b4 = [0u8; 4];
        for c in labels.iter_mut() {
            r.read_exact(&mut b4)?;
            *c = i32::from_le_bytes(b4);
        }
        Ok(Self { bound, n, labels })
    }
}

/// Reeb graph, atlas and the Hamiltonian data needed to project points.
#[derive(Debug, Clone)]
pub struct Reeb {
    pub graph: ReebGraph,
    pub atlas: RegionAtlas,
    pub critical_points: Vec<CriticalPoint>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

const NEIGH4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const NEIGH8: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Builds the Reeb graph of `H` below `z_max` on a grid with `resolution`
/// cells per side.
pub fn build_reeb(h: &Hamiltonian, critical_points: &[CriticalPoint], z_max: f64, resolution: usize) -> Result<Reeb> {
    let max_crit = critical_points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    if !(z_max > max_crit) {
        return Err(Error::Parameter(format!("z_max = {z_max} must exceed every critical value ({max_crit})")));
    }
    if resolution < 16 {
        return Err(Error::Parameter("atlas resolution must be at least 16".into()));
    }
    let n = resolution;
    let side = n + 1;
    let bound = h.bound();
    let step = 2.0 * bound / n as f64;
    let node = |i: usize, j: usize| [-bound + i as f64 * step, -bound + j as f64 * step];
    let idx = |i: usize, j: usize| j * side + i;
    let nearest = |x: Point| {
        let i = (((x[0] + bound) / step).round().max(0.0) as usize).min(n);
        let j = (((x[1] + bound) / step).round().max(0.0) as usize).min(n);
        (i, j)
    };
    let neighbours = |i: usize, j: usize, set: &'static [(isize, isize)]| {
        set.iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && a <= n as isize && b <= n as isize).then_some((a as usize, b as usize))
        })
    };

    let values: Vec<f64> = (0..side * side).map(|c| h.value(node(c % side, c / side))).collect();
    let grad_norm: Vec<f64> = (0..side * side)
        .map(|c| {
            let g = h.gradient(node(c % side, c / side));
            g[0].hypot(g[1])
        })
        .collect();

    // Vertices: extrema and saddles in critical-point order, then the cap.
    let mut vertices: Vec<Vertex> = critical_points
        .iter()
        .enumerate()
        .map(|(i, p)| Vertex {
            id: i,
            kind: if p.kind == CriticalKind::Saddle { VertexKind::Saddle } else { VertexKind::Extremum },
            z: p.value,
            critical_point: Some(i),
            location: Some(p.location),
        })
        .collect();
    let cap = vertices.len();
    vertices.push(Vertex { id: cap, kind: VertexKind::Infinity, z: z_max, critical_point: None, location: None });

    // Raw codes: OUTSIDE, band of saddle s (as -2 - s), or UNSET.
    const UNSET: i32 = i32::MIN;
    let mut raw = vec![UNSET; side * side];
    for c in 0..side * side {
        if values[c] >= z_max {
            raw[c] = OUTSIDE;
        }
    }
    for (s, p) in critical_points.iter().enumerate() {
        if p.kind != CriticalKind::Saddle {
            continue;
        }
        for c in 0..side * side {
            if raw[c] == OUTSIDE {
                continue;
            }
            let half = (4.0 * step * grad_norm[c]).max(1e-6);
            if (values[c] - p.value).abs() < half {
                if raw[c] != UNSET {
                    return Err(Error::BandOverlap((-2 - raw[c]) as usize, s));
                }
                raw[c] = -2 - s as i32;
            }
        }
    }

    // Regular regions by 4-connected flood fill.
    let mut region = vec![usize::MAX; side * side];
    let mut regions = 0;
    let mut queue = VecDeque::new();
    for start in 0..side * side {
        if raw[start] != UNSET || region[start] != usize::MAX {
            continue;
        }
        region[start] = regions;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for (a, b) in neighbours(c % side, c / side, &NEIGH4) {
                let d = idx(a, b);
                if raw[d] == UNSET && region[d] == usize::MAX {
                    region[d] = regions;
                    queue.push_back(d);
                }
            }
        }
        regions += 1;
    }

    // Band components: those through the saddle form the vertex; the rest
    // are regular level-set components that merely cut a region in two.
    let mut uf = UnionFind((0..regions).collect());
    let mut vertex_band = vec![false; side * side];
    let mut seen = vec![false; side * side];
    let mut regular_bands: Vec<Vec<usize>> = Vec::new();
    for start in 0..side * side {
        if raw[start] >= OUTSIDE || raw[start] == UNSET || seen[start] {
            continue;
        }
        let s = (-2 - raw[start]) as usize;
        let (si, sj) = nearest(critical_points[s].location);
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let c = comp[k];
            k += 1;
            for (a, b) in neighbours(c % side, c / side, &NEIGH8) {
                let d = idx(a, b);
                if raw[d] == raw[start] && !seen[d] {
                    seen[d] = true;
                    comp.push(d);
                }
            }
        }
        let through_saddle = comp.iter().any(|&c| {
            let (i, j) = (c % side, c / side);
            i.abs_diff(si) <= 2 && j.abs_diff(sj) <= 2
        });
        if through_saddle {
            for &c in &comp {
                vertex_band[c] = true;
            }
        } else {
            let mut touched = Vec::new();
            for &c in &comp {
                for (a, b) in neighbours(c % side, c / side, &NEIGH4) {
                    let r = region[idx(a, b)];
                    if r != usize::MAX {
                        touched.push(r);
                    }
                }
            }
            for w in touched.windows(2) {
                uf.union(w[0], w[1]);
            }
            regular_bands.push(comp);
        }
    }
    for comp in &regular_bands {
        let c = comp[0];
        let r = neighbours(c % side, c / side, &NEIGH8)
            .chain(comp.iter().flat_map(|&c| neighbours(c % side, c / side, &NEIGH4)))
            .map(|(a, b)| region[idx(a, b)])
            .find(|&r| r != usize::MAX)
            .ok_or_else(|| Error::Reeb("isolated regular band".into()))?;
        for &c in comp {
            region[c] = r;
        }
    }
    for r in region.iter_mut() {
        if *r != usize::MAX {
            *r = uf.find(*r);
        }
    }

    // Endpoints of each merged region.
    #[derive(Default, Clone)]
    struct Ends {
        lower: Vec<usize>,
        upper: Vec<usize>,
        outside: bool,
        boundary: bool,
        sum_x: f64,
        count: usize,
        used: bool,
    }
    let mut ends = vec![Ends::default(); regions];
    for c in 0..side * side {
        let r = region[c];
        if r == usize::MAX {
            continue;
        }
        let (i, j) = (c % side, c / side);
        let e = &mut ends[r];
        e.used = true;
        e.sum_x += node(i, j)[0];
        e.count += 1;
        if i == 0 || j == 0 || i == n || j == n {
            e.boundary = true;
        }
        for (a, b) in neighbours(i, j, &NEIGH4) {
            let d = idx(a, b);
            if raw[d] == OUTSIDE {
                e.outside = true;
            } else if vertex_band[d] {
                let s = (-2 - raw[d]) as usize;
                let list = if values[c] > critical_points[s].value { &mut e.lower } else { &mut e.upper };
                if !list.contains(&s) {
                    list.push(s);
                }
            }
        }
    }
    for (vi, p) in critical_points.iter().enumerate() {
        if p.kind == CriticalKind::Saddle {
            continue;
        }
        let (i, j) = nearest(p.location);
        let r = region[idx(i, j)];
        if r == usize::MAX {
            return Err(Error::Reeb(format!("extremum {vi} is not inside any regular region")));
        }
        let list = if p.kind == CriticalKind::Min { &mut ends[r].lower } else { &mut ends[r].upper };
        list.push(vi);
    }

    let mut edges = Vec::new();
    let mut region_edge = vec![usize::MAX; regions];
    let mut order: Vec<usize> = (0..regions).filter(|&r| ends[r].used).collect();
    for &r in &order {
        let e = &ends[r];
        if e.boundary && !e.outside {
            return Err(Error::Reeb("a region below z_max reaches the domain boundary; enlarge the domain or lower z_max".into()));
        }
        if e.boundary {
            return Err(Error::Reeb("the cap level set reaches the domain boundary; lower z_max".into()));
        }
    }
    let lower_of = |e: &Ends| -> Result<usize> {
        match e.lower.as_slice() {
            [v] => Ok(*v),
            other => Err(Error::Reeb(format!("region has {} lower endpoints", other.len()))),
        }
    };
    let mut keyed = Vec::new();
    for &r in &order {
        let e = &ends[r];
        let lo = lower_of(e)?;
        let hi = match (e.upper.as_slice(), e.outside) {
            ([v], false) => *v,
            ([], true) => cap,
            (u, o) => {
                return Err(Error::Reeb(format!(
                    "region has {} upper endpoints{}",
                    u.len(),
                    if o { " plus the cap" } else { "" }
                )))
            }
        };
        keyed.push((vertices[lo].z, e.sum_x / e.count as f64, r, lo, hi));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    order.clear();
    for (k, &(_, _, r, lo, hi)) in keyed.iter().enumerate() {
        region_edge[r] = k;
        edges.push(Edge {
            id: k,
            z_lo: vertices[lo].z,
            z_hi: vertices[hi].z,
            vertices: [lo, hi],
            signs: [-1, 1],
        });
    }

    let labels = (0..side * side)
        .map(|c| {
            if raw[c] == OUTSIDE {
                OUTSIDE
            } else if vertex_band[c] {
                raw[c]
            } else {
                region_edge[region[c]] as i32
            }
        })
        .collect();
    let graph = ReebGraph { vertices, edges, z_max };
    graph.validate()?;
    Ok(Reeb { graph, atlas: RegionAtlas { bound, n, labels }, critical_points: critical_points.to_vec() })
}

impl Reeb {
    pub fn z_max(&self) -> f64 {
        self.graph.z_max
    }

    /// `Π(x) = (H(x), k(x))`.
    pub fn project(&self, h: &Hamiltonian, x: Point) -> Result<GraphPoint> {
        self.project_detailed(h, x).map(|p| p.point)
    }

    /// Edge label only, for points already known to be in the domain and
    /// below the cap. Falls back to the full projection near bands.
    pub fn edge_of(&self, h: &Hamiltonian, x: Point) -> Result<usize> {
        if let Some(k) = self.atlas.corner_labels(x).and_then(single_edge) {
            return Ok(k);
        }
        self.project(h, x).map(|p| p.k)
    }

    pub fn project_detailed(&self, h: &Hamiltonian, x: Point) -> Result<Projection> {
        if !h.contains(x) {
            return Err(Error::OutOfDomain { point: x, bound: h.bound() });
        }
        let z_max = self.graph.z_max;
        let z = h.value(x);
        if z > z_max + 1e-9 * (1.0 + z_max) {
            return Err(Error::AboveCap { point: x, z_max });
        }
        let z = z.min(z_max);
        let corners = self.atlas.corner_labels(x).expect("point is in the domain");
        if let Some(k) = single_edge(corners) {
            return Ok(Projection { point: GraphPoint { z, k }, vertex: None });
        }
        // Just below the cap with every corner above it.
        if corners.iter().all(|&l| l == Label::Outside) {
            return Ok(Projection { point: GraphPoint { z, k: self.graph.infinity_edge() }, vertex: None });
        }
        let saddle = corners
            .iter()
            .find_map(|l| match l {
                Label::Band(s) => Some(*s),
                _ => None,
            })
            .ok_or_else(|| Error::Reeb(format!("cell at ({}, {}) mixes edge labels without a band", x[0], x[1])))?;
        let zs = self.graph.vertices[saddle].z;
        let g0 = h.gradient(x);
        if (z - zs).abs() <= 1e-9 * (1.0 + zs.abs()) || g0[0].hypot(g0[1]) < 1e-12 {
            let k = self.graph.incident(saddle)[0];
            return Ok(Projection { point: GraphPoint { z: zs, k }, vertex: Some(saddle) });
        }
        // Follow the gradient line away from the saddle level: it stays on
        // the edge whose level curve passes through x.
        let dir = if z > zs { 1.0 } else { -1.0 };
        let step = 0.5 * self.atlas.spacing();
        let mut y = x;
        for _ in 0..400 {
            let g = h.gradient(y);
            let norm = g[0].hypot(g[1]);
            if norm < 1e-14 {
                break;
            }
            y = [y[0] + dir * step * g[0] / norm, y[1] + dir * step * g[1] / norm];
            if !h.contains(y) {
                break;
            }
            if let Some(k) = self.atlas.corner_labels(y).and_then(single_edge) {
                let e = &self.graph.edges[k];
                if (dir > 0.0 && e.lower() == saddle) || (dir < 0.0 && e.upper() == saddle) {
                    return Ok(Projection { point: GraphPoint { z, k }, vertex: None });
                }
                break;
            }
        }
        Err(Error::Reeb(format!("could not resolve the edge of ({}, {}) near saddle {saddle}", x[0], x[1])))
    }
}

fn single_edge(corners: [Label; 4]) -> Option<usize> {
    let mut k = None;
    for l in corners {
        match l {
            Label::Edge(e) => match k {
                None => k = Some(e),
                Some(prev) if prev != e => return None,
                _ => {}
            },
            Label::Outside => {}
            Label::Band(_) => return None,
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;

    fn build(spec: HamiltonianSpec, bound: f64, z_max: f64) -> (Hamiltonian, Reeb) {
        let h = Hamiltonian::new(spec, bound).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, z_max, 300).unwrap();
        (h, r)
    }

    #[test]
    fn radial_graph_is_one_edge() {
        let (h, r) = build(HamiltonianSpec::Radial, 3.0, 2.0);
        assert_eq!(r.graph.edges.len(), 1);
        assert_eq!(r.graph.vertices.len(), 2);
        let e = &r.graph.edges[0];
        assert_eq!((e.z_lo, e.z_hi), (0.0, 2.0));
        let p = r.project(&h, [1.0, 1.0]).unwrap();
        assert_eq!(p, GraphPoint { z: 1.0, k: 0 });
    }

    #[test]
    fn points_just_below_the_cap_project_to_the_top_edge() {
        let (h, r) = build(HamiltonianSpec::anisotropic(), 3.0, 2.0);
        for a in [0.1f64, 0.7, 1.3, 2.9] {
            let (mut lo, mut hi) = (0.0, 3.0);
            for _ in 0..60 {
                let m = 0.5 * (lo + hi);
                if h.value([m * a.cos(), m * a.sin()]) < 2.0 - 1e-9 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            let x = [lo * a.cos(), lo * a.sin()];
            assert!(h.value(x) < 2.0);
            let p = r.project(&h, x).unwrap();
            assert_eq!(p.k, 0);
            assert!((p.z - h.value(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn anisotropic_graph_matches_radial_shape() {
        let (_, r) = build(HamiltonianSpec::anisotropic(), 3.0, 2.0);
        assert_eq!(r.graph.edges.len(), 1);
        assert_eq!(r.graph.vertices.iter().filter(|v| v.kind == VertexKind::Extremum).count(), 1);
    }

    #[test]
    fn two_well_graph_shape() {
        let (_, r) = build(HamiltonianSpec::two_well(), 3.0, 2.0);
        let g = &r.graph;
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.saddles().count(), 1);
        let s = g.saddles().next().unwrap().id;
        assert_eq!(g.incident(s).len(), 3);
        let outer = g.infinity_edge();
        assert_eq!(g.sign(outer, s), -1);
        for k in g.incident(s) {
            if k != outer {
                assert_eq!(g.sign(k, s), 1);
            }
        }
    }

    #[test]
    fn distances() {
        let (_, r) = build(HamiltonianSpec::two_well(), 3.0, 2.0);
        let g = &r.graph;
        assert_eq!(g.distance(GraphPoint { z: 1.0, k: 2 }, GraphPoint { z: 1.5, k: 2 }), 0.5);
        let p = GraphPoint { z: 0.1, k: 0 };
        assert_eq!(g.distance(p, p), 0.0);
        let zs = g.saddles().next().unwrap().z;
        let a = GraphPoint { z: g.edges[0].z_lo, k: 0 };
        let b = GraphPoint { z: g.edges[1].z_lo, k: 1 };
        let d = g.distance(a, b);
        assert!((d - ((zs - a.z) + (zs - b.z))).abs() < 1e-12);
    }

    #[test]
    fn atlas_round_trips_through_binary() {
        let (_, r) = build(HamiltonianSpec::two_well(), 3.0, 2.0);
        let mut buf = Vec::new();
        r.atlas.write_to(&mut buf).unwrap();
        let back = RegionAtlas::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, r.atlas);
        assert!(RegionAtlas::read_from(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn saddle_point_projects_to_vertex() {
        let (h, r) = build(HamiltonianSpec::two_well(), 3.0, 2.0);
        let s = r.graph.saddles().next().unwrap();
        let p = r.project_detailed(&h, s.location.unwrap()).unwrap();
        assert_eq!(p.vertex, Some(s.id));
        assert_eq!(p.point.z, s.z);
    }

    #[test]
    fn cap_and_domain_errors() {
        let (h, r) = build(HamiltonianSpec::Radial, 3.0, 2.0);
        assert!(matches!(r.project(&h, [1.9, 1.9]), Err(Error::AboveCap { .. })));
        assert!(matches!(r.project(&h, [3.5, 0.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn region_reaching_boundary_is_rejected() {
        let h = Hamiltonian::new(HamiltonianSpec::Radial, 1.0).unwrap();
        let cps = h.find_critical_points(64).unwrap().points;
        assert!(matches!(build_reeb(&h, &cps, 2.0, 64), Err(Error::Reeb(_))));
    }
}
