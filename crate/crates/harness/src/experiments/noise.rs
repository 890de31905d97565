//! Checks of the noise basis and the graph-averaged noise.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reebflow::coeffs::{CoefficientTables, GraphQuadrature, PlaneQuadrature};
use reebflow::noise::{NoiseBasis, SpectralMeasure};
use reebflow::reeb::GraphPoint;
use reebflow::rng::{derive_seed, NormalStream};
use reebflow::stats::Accumulator;

use crate::context::Context;
use crate::report::{num, Check, Report, Table};

pub fn measure(ctx: &Context) -> Result<SpectralMeasure> {
    Ok(SpectralMeasure::symmetrized(ctx.cfg.noise.atoms.clone())?)
}

/// Random graph points away from the edge ends.
fn random_points(ctx: &Context, rng: &mut ChaCha8Rng) -> GraphPoint {
    let g = &ctx.reeb.graph;
    let k = rng.random_range(0..g.edges.len());
    let e = &g.edges[k];
    let s: f64 = rng.random_range(0.05..0.95);
    GraphPoint { z: e.z_lo + s * (e.z_hi - e.z_lo), k }
}

pub fn noise_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let nc = &ctx.cfg.noise;
    let th = &ctx.cfg.thresholds;
    let mut r = Report::new("noise_check", ctx.cfg.seed);
    let mu = measure(ctx)?;
    let basis = NoiseBasis::build(&mu, tables, &ctx.reeb.graph);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.cfg.seed, 0x6e6f));

    // Reconstruction of the covariance from the basis.
    let b = ctx.h.bound();
    let mut recon = 0.0f64;
    for _ in 0..200 {
        let x = [rng.random_range(-b..b), rng.random_range(-b..b)];
        let y = [rng.random_range(-b..b), rng.random_range(-b..b)];
        recon = recon.max((basis.kernel(x, y) - mu.covariance([x[0] - y[0], x[1] - y[1]])).abs());
    }
    r.checks.push(Check::at_most("noise-basis", "max |Σ e_j(x)e_j(y) − Λ(x−y)| over 200 pairs", recon, 0.0, 1e-12));

    // Empirical covariance of W̄(t) at point pairs against the exact formula.
    let t = nc.t;
    let pairs: Vec<(GraphPoint, GraphPoint)> = (0..nc.pairs).map(|_| (random_points(ctx, &mut rng), random_points(ctx, &mut rng))).collect();
    let seed = derive_seed(ctx.cfg.seed, 0x636f);
    let draws = ctx.cfg.exec.map(nc.samples, |s| {
        let mut xi = vec![0.0; basis.len()];
        NormalStream::new(seed, s as u64).fill(0, &mut xi);
        pairs
            .iter()
            .map(|&(p, q)| (basis.graph_increment_at(tables, p, t, &xi), basis.graph_increment_at(tables, q, t, &xi)))
            .collect::<Vec<_>>()
    });
    let mut table = Table::new("noise_covariance", &["pair", "z1", "k1", "z2", "k2", "exact", "empirical", "std_error", "z_score"]);
    let mut worst = 0.0f64;
    for (i, &(p, q)) in pairs.iter().enumerate() {
        let mut acc = Accumulator::default();
        for d in &draws {
            acc.push(d[i].0 * d[i].1);
        }
        let e = acc.estimate();
        let exact = NoiseBasis::graph_covariance(tables, &mu, p, q, t);
        let z = (e.mean - exact).abs() / e.std_error;
        worst = worst.max(z);
        table.push(vec![i.to_string(), num(p.z), p.k.to_string(), num(q.z), q.k.to_string(), num(exact), num(e.mean), num(e.std_error), num(z)]);
    }
    r.tables.push(table);
    r.checks.push(
        Check::at_most("C11", "graph-noise covariance vs exact formula (max z-score)", worst, 0.0, th.se_multiplier)
            .with_detail(format!("{} pairs, {} samples", nc.pairs, nc.samples)),
    );

    // Averaging contracts the basis norms; the mean-square norm of W̄ is bounded.
    let weight = ctx.weight()?;
    let gq = GraphQuadrature::new(tables);
    let plane = PlaneQuadrature::new(&ctx.h, &ctx.reeb, ctx.cfg.domain.plane_resolution, ctx.cfg.exec)?;
    let graph_sum: f64 = basis.averages.iter().map(|a| gq.inner(tables, &weight, a, a)).sum();
    let plane_sum: f64 = basis.fields.iter().map(|f| plane.norm(&weight, |x| f.eval(x)).powi(2)).sum();
    let gamma_mass = plane.integrate(&weight, |_| 1.0);
    r.checks.push(
        Check::at_most("noise-contraction", "Σ|e_j^∧|² / Σ|e_j|² in the weighted norms", graph_sum / plane_sum, 0.0, 1.0 + th.operator_identity)
            .with_detail(format!("graph {graph_sum:.5e}, plane {plane_sum:.5e}")),
    );
    r.checks.push(Check::at_most(
        "noise-moment",
        "E|W̄(t)|² / (t μ(R²) ∫γ^∨)",
        t * graph_sum / (t * mu.total_mass() * gamma_mass),
        0.0,
        1.0 + th.operator_identity,
    ));
    Ok(r)
}
