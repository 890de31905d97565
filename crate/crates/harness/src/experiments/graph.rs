//! Checks of the finite-volume generator and its semigroup.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reebflow::coeffs::CoefficientTables;
use reebflow::fields::RandomGraphFn;
use reebflow::graphgen::{CellKind, GeneratorMatrix};
use reebflow::reeb::{GraphPoint, VertexKind};
use reebflow::rng::derive_seed;
use reebflow::stats::Accumulator;

use crate::context::Context;
use crate::report::{num, Check, Report, Table};

/// Bins per edge for the occupancy comparison.
const OCC_BINS: usize = 3;

fn bin_of(q: &GeneratorMatrix, cell: usize) -> usize {
    let p = q.point_of(cell);
    let g = &q.edges[p.k];
    let s = ((p.z - g.z_lo) / (g.dz * g.n as f64)).clamp(0.0, 1.0 - 1e-12);
    p.k * OCC_BINS + (s * OCC_BINS as f64) as usize
}

/// Conservation, stationarity, gluing and jump-process occupancy.
pub fn generator_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let gc = &ctx.cfg.graph;
    let g = &ctx.reeb.graph;
    let mut r = Report::new("generator", ctx.cfg.seed);
    let q = GeneratorMatrix::discretize(g, tables, gc.spacing)?;

    let exact = (0..q.len()).all(|i| q.row_sum(i) == 0.0);
    r.checks.push(Check::flag("C6", "row sums of Q are exactly zero", exact, format!("{} cells", q.len())));

    let masses = q.masses();
    let total: f64 = masses.iter().sum();
    let scale = total * q.max_rate;
    let stat = q.stationarity_residual().iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
    r.checks.push(Check::at_most("C6", "max |mᵀQ| / (Σm · max rate)", stat, 0.0, th.stationarity));

    // Harmonic function with distinct values at the leaves.
    let leaves: Vec<(usize, f64)> = g
        .vertices
        .iter()
        .filter(|v| v.kind != VertexKind::Saddle)
        .enumerate()
        .map(|(i, v)| (v.id, i as f64))
        .collect();
    if g.saddles().next().is_some() {
        let f = q.steady_state(&leaves)?;
        let spread = leaves.iter().map(|l| l.1).fold(0.0, f64::max);
        for s in g.saddles() {
            let flux_scale: f64 = q.links[s.id].iter().map(|&(_, w)| w).sum::<f64>() * spread * q.edges.iter().map(|e| e.dz).fold(0.0, f64::max);
            let flux = q.vertex_flux(&f, s.id).abs() / flux_scale;
            r.checks.push(Check::at_most("C6", &format!("gluing flux balance at saddle {}", s.id), flux, 0.0, th.gluing));
        }
    }

    // Occupancy of stationary-started chains.
    let mean_rate: f64 = (0..q.len()).map(|i| -masses[i] * q.diagonal(i)).sum::<f64>() / total;
    let paths = 200usize;
    let per_path = gc.jumps.div_ceil(paths);
    let t_end = per_path as f64 / mean_rate;
    let nbins = q.edges.len() * OCC_BINS;
    let cdf: Vec<f64> = masses
        .iter()
        .scan(0.0, |s, m| {
            *s += m / total;
            Some(*s)
        })
        .collect();
    let seed = derive_seed(ctx.cfg.seed, 0x6f63);
    let per = ctx.cfg.exec.map(paths, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, p as u64));
        let u: f64 = rng.random();
        let start = cdf.partition_point(|&c| c < u).min(q.len() - 1);
        let path = q.sample_path(q.point_of(start), t_end, seed, p as u64);
        let occ = path.occupancy(q.len());
        let mut bins = vec![0.0; nbins];
        for (c, t) in occ.iter().enumerate() {
            bins[bin_of(&q, c)] += t / t_end;
        }
        (bins, path.times.len() - 1)
    });
    let jumps: usize = per.iter().map(|p| p.1).sum();
    let mut want = vec![0.0; nbins];
    for (c, m) in masses.iter().enumerate() {
        want[bin_of(&q, c)] += m / total;
    }
    let mut table = Table::new("occupancy", &["bin", "edge", "expected", "observed", "std_error", "z_score"]);
    let mut worst = 0.0f64;
    for b in 0..nbins {
        let mut acc = Accumulator::default();
        for p in &per {
            acc.push(p.0[b]);
        }
        let e = acc.estimate();
        let z = (e.mean - want[b]).abs() / e.std_error;
        worst = worst.max(z);
        table.push(vec![b.to_string(), (b / OCC_BINS).to_string(), num(want[b]), num(e.mean), num(e.std_error), num(z)]);
    }
    r.tables.push(table);
    r.checks.push(
        Check::at_most("C6", "jump-process occupancy vs m (max z-score)", worst, 0.0, th.se_multiplier)
            .with_detail(format!("{jumps} jumps over {paths} stationary-started paths")),
    );
    let vertex_cells = q.cells.iter().filter(|c| matches!(c.kind, CellKind::Vertex { .. })).count();
    r.notes.push(format!("generator: {} cells, {} vertex cells, max rate {:.3e}", q.len(), vertex_cells, q.max_rate));
    Ok(r)
}

/// Five graph test functions: `z`, `cos 3z`, an edge-dependent bump and two
/// random smooth functions.
pub fn graph_test_functions(ctx: &Context, tables: &CoefficientTables, q: &GeneratorMatrix) -> Vec<(String, Vec<f64>)> {
    let edges = ctx.reeb.graph.edges.len();
    let r1 = RandomGraphFn::new(derive_seed(ctx.cfg.seed, 71), edges);
    let r2 = RandomGraphFn::new(derive_seed(ctx.cfg.seed, 72), edges);
    vec![
        ("z".into(), q.project_fn(tables, |z, _| z)),
        ("cos3z".into(), q.project_fn(tables, |z, _| (3.0 * z).cos())),
        ("edge_bump".into(), q.project_fn(tables, |z, k| (k as f64 + 1.0) * (-z * z).exp())),
        ("random_a".into(), q.project_fn(tables, |z, k| r1.eval(z, k))),
        ("random_b".into(), q.project_fn(tables, |z, k| r2.eval(z, k))),
    ]
}

/// Monte Carlo over jump paths against the Crank–Nicolson semigroup.
pub fn semigroup_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let gc = &ctx.cfg.graph;
    let mut r = Report::new("graph_semigroup", ctx.cfg.seed);
    let q = GeneratorMatrix::discretize(&ctx.reeb.graph, tables, gc.spacing)?;
    let e0 = &ctx.reeb.graph.edges[0];
    let start = GraphPoint { z: 0.5 * (e0.z_lo + e0.z_hi), k: 0 };
    let cell = q.cell_of(start);
    let mut t = Table::new("graph_semigroup", &["function", "t", "mc_mean", "mc_se", "cn", "cn_budget", "abs_diff"]);
    let mut worst = (0.0f64, String::new());
    for (i, (name, f)) in graph_test_functions(ctx, tables, &q).iter().enumerate() {
        let mc = q.mc_expectation(f, start, &gc.times, gc.paths, derive_seed(ctx.cfg.seed, 100 + i as u64), ctx.cfg.exec);
        for (j, &time) in gc.times.iter().enumerate() {
            let cn = q.apply_semigroup(f, time, gc.dt)?[cell];
            let cn_half = q.apply_semigroup(f, time, 0.5 * gc.dt)?[cell];
            let budget = (cn - cn_half).abs();
            let diff = (mc[j].mean - cn).abs();
            let ratio = diff / (th.se_multiplier * mc[j].std_error + budget);
            if ratio > worst.0 {
                worst = (ratio, format!("{name} at t = {time}"));
            }
            t.push(vec![name.clone(), num(time), num(mc[j].mean), num(mc[j].std_error), num(cn), num(budget), num(diff)]);
        }
    }
    r.tables.push(t);
    r.checks.push(
        Check::at_most("C7", "|MC − CN| / (3 SE + CN budget), worst case", worst.0, 0.0, 1.0)
            .with_detail(format!("{} paths; worst {}", gc.paths, worst.1)),
    );
    Ok(r)
}
