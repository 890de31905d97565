//! Reeb graph export and coefficient validation.

use std::f64::consts::PI;

use anyhow::Result;
use reebflow::coeffs::{CoefficientTables, GraphFunction, GraphQuadrature, PlaneQuadrature, SampleZone};
use reebflow::fields::{RandomGraphFn, SmoothField};
use reebflow::hamiltonian::{ClauseStatus, CriticalKind};
use reebflow::reeb::VertexKind;
use reebflow::rng::derive_seed;

use crate::context::Context;
use crate::report::{num, Check, Report, Table};

/// Critical points, genericity clauses, vertices and edges.
pub fn reeb_report(ctx: &Context) -> Report {
    let mut r = Report::new("reeb", ctx.cfg.seed);
    let mut cps = Table::new("critical_points", &["x1", "x2", "value", "kind", "hess_det", "newton_tol"]);
    for c in &ctx.critical_points {
        let kind = match c.kind {
            CriticalKind::Min => "min",
            CriticalKind::Max => "max",
            CriticalKind::Saddle => "saddle",
        };
        cps.push(vec![num(c.location[0]), num(c.location[1]), num(c.value), kind.into(), num(c.hess_det), num(1e-12)]);
    }
    r.tables.push(cps);

    let gen = ctx.h.validate_generic(&ctx.critical_points);
    let mut clauses = Table::new("genericity", &["clause", "status", "detail"]);
    for c in &gen.clauses {
        let s = match c.status {
            ClauseStatus::Pass => "pass",
            ClauseStatus::Fail => "fail",
            ClauseStatus::WaivedTruncated => "waived_truncated",
        };
        clauses.push(vec![c.name.clone(), s.into(), c.detail.clone()]);
        if c.status == ClauseStatus::Fail {
            r.notes.push(format!("genericity clause {} fails: {}", c.name, c.detail));
        }
    }
    r.tables.push(clauses);

    let g = &ctx.reeb.graph;
    let mut vt = Table::new("vertices", &["id", "kind", "z"]);
    for v in &g.vertices {
        let kind = match v.kind {
            VertexKind::Extremum => "extremum",
            VertexKind::Saddle => "saddle",
            VertexKind::Infinity => "infinity",
        };
        vt.push(vec![v.id.to_string(), kind.into(), num(v.z)]);
    }
    r.tables.push(vt);
    let mut et = Table::new("edges", &["id", "lower", "upper", "z_lo", "z_hi"]);
    for e in &g.edges {
        et.push(vec![e.id.to_string(), e.lower().to_string(), e.upper().to_string(), num(e.z_lo), num(e.z_hi)]);
    }
    r.tables.push(et);

    let tree = g.edges.len() + 1 == g.vertices.len();
    r.checks.push(Check::flag("reeb-tree", "graph is a tree", tree, format!("{} vertices, {} edges", g.vertices.len(), g.edges.len())));
    let degrees_ok = g.vertices.iter().all(|v| {
        let d = g.incident(v.id).len();
        match v.kind {
            VertexKind::Saddle => d == 3,
            VertexKind::Extremum | VertexKind::Infinity => d == 1,
        }
    });
    r.checks.push(Check::flag("reeb-degrees", "saddles have degree 3, extrema and the cap degree 1", degrees_ok, ""));
    r
}

/// Per-sample coefficient table and checks of the period, area and
/// divergence identities, vertex limits and saddle log fits.
pub fn coefficient_report(ctx: &Context, tables: &CoefficientTables) -> Report {
    let th = &ctx.cfg.thresholds;
    let name = ctx.h.spec().name();
    let mut r = Report::new(&format!("coeffs_{name}"), ctx.cfg.seed);
    let mut t = Table::new(
        &format!("coeffs_{name}"),
        &["edge", "zone", "z", "T", "T_from_area", "T_budget", "alpha", "laplacian_integral", "alpha_budget", "area"],
    );
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let mut worst_t = (0.0f64, String::new());
    let mut worst_a = (0.0f64, String::new());
    for e in &tables.edges {
        for s in &e.samples {
            let zone = match s.zone {
                SampleZone::Core => "core".to_string(),
                SampleZone::Refine { vertex, level } => format!("refine_v{vertex}_l{level}"),
                SampleZone::Vertex { vertex } => format!("vertex_v{vertex}"),
                SampleZone::Cap => "cap".to_string(),
            };
            let tb = s.t_from_area.map(|ta| (s.t - ta).abs());
            let ab = s.laplacian_integral.map(|li| (s.alpha - li).abs());
            if matches!(s.zone, SampleZone::Core) {
                if let Some(b) = tb {
                    if b / s.t > worst_t.0 {
                        worst_t = (b / s.t, format!("edge {} z {:.4}", e.edge, s.z));
                    }
                }
                if let Some(b) = ab {
                    if b / s.alpha > worst_a.0 {
                        worst_a = (b / s.alpha, format!("edge {} z {:.4}", e.edge, s.z));
                    }
                }
            }
            t.push(vec![e.edge.to_string(), zone, num(s.z), num(s.t), opt(s.t_from_area), opt(tb), num(s.alpha), opt(s.laplacian_integral), opt(ab), num(s.area)]);
        }
    }
    r.tables.push(t);
    if ctx.cfg.tables.cross_checks {
        r.checks.push(Check::at_most("C2", &format!("{name}: |T − ΔS/Δz| / T on core samples"), worst_t.0, 0.0, th.relative).with_detail(worst_t.1));
        r.checks.push(Check::at_most("C3", &format!("{name}: |α − ∫ΔH| / α on core samples"), worst_a.0, 0.0, th.relative).with_detail(worst_a.1));
    }

    // Period limit at extrema from the nearest computed samples.
    let g = &ctx.reeb.graph;
    let mut vlim = Table::new(&format!("vertex_limits_{name}"), &["vertex", "edge", "z", "T", "limit", "rel_err"]);
    let mut worst_v = (0.0f64, String::new());
    let mut any_extremum = false;
    for v in g.vertices.iter().filter(|v| v.kind == VertexKind::Extremum) {
        let Some(cp) = v.critical_point.map(|i| &ctx.reeb.critical_points[i]) else { continue };
        any_extremum = true;
        let limit = 2.0 * PI / cp.hess_det.abs().sqrt();
        for k in g.incident(v.id) {
            let e = tables.edge(k);
            let mut near: Vec<_> = e.samples.iter().filter(|s| s.is_computed()).collect();
            near.sort_by(|a, b| (a.z - v.z).abs().total_cmp(&(b.z - v.z).abs()));
            for s in near.iter().take(3) {
                let rel = (s.t - limit).abs() / limit;
                vlim.push(vec![v.id.to_string(), k.to_string(), num(s.z), num(s.t), num(limit), num(rel)]);
                if rel > worst_v.0 {
                    worst_v = (rel, format!("vertex {} z {:.3e}", v.id, s.z));
                }
            }
        }
    }
    r.tables.push(vlim);
    if any_extremum {
        r.checks.push(Check::at_most("C1", &format!("{name}: T near extrema vs 2π/√det"), worst_v.0, 0.0, th.relative).with_detail(worst_v.1));
    }

    // Logarithmic divergence at saddles.
    let mut fits = Table::new(&format!("saddle_fits_{name}"), &["vertex", "edge", "c0", "c1", "c1_se", "residual", "samples"]);
    for v in g.saddles() {
        for k in g.incident(v.id) {
            match tables.saddle_log_fit(k, v.id) {
                Ok(f) => {
                    fits.push(vec![v.id.to_string(), k.to_string(), num(f.c0), num(f.c1), num(f.c1_std_error), num(f.residual), f.samples.to_string()]);
                    r.checks.push(
                        Check::at_most("C4", &format!("{name}: saddle log-fit residual on edge {k}"), f.residual, 0.0, th.log_fit_residual)
                            .with_detail(format!("c1 = {:.4} ± {:.1e}", f.c1, f.c1_std_error)),
                    );
                    r.checks.push(Check::flag("C4", &format!("{name}: log coefficient positive on edge {k}"), f.c1 > 0.0, format!("c1 = {:.4}", f.c1)));
                }
                Err(e) => r.checks.push(Check::flag("C4", &format!("{name}: saddle fit on edge {k}"), false, e.to_string())),
            }
        }
    }
    r.tables.push(fits);
    r
}

/// Contraction, isometry, duality and multiplicativity of `∧` and `∨` over
/// random smooth fields and random graph functions.
pub fn operator_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let name = ctx.h.spec().name();
    let mut r = Report::new(&format!("operators_{name}"), ctx.cfg.seed);
    let weight = ctx.weight()?;
    let plane = PlaneQuadrature::new(&ctx.h, &ctx.reeb, ctx.cfg.domain.plane_resolution, ctx.cfg.exec)?;
    let gq = GraphQuadrature::new(tables);
    let g = &ctx.reeb.graph;
    let n = th.random_functions;
    let rows = ctx.cfg.exec.try_map(n, |i| -> Result<[f64; 4]> {
        let u = SmoothField::random(derive_seed(ctx.cfg.seed, 2 * i as u64));
        let f = RandomGraphFn::new(derive_seed(ctx.cfg.seed, 2 * i as u64 + 1), g.edges.len());
        let uh = GraphFunction::average_of(tables, g, |x| u.eval(x));
        let u_norm = plane.norm(&weight, |x| u.eval(x));
        let uh_norm = gq.norm(tables, &weight, &uh);
        let contraction = (uh_norm / u_norm - 1.0).max(0.0);

        let f_graph = gq.integrate(&weight, |z, k| f.eval(z, k).powi(2)).sqrt();
        let f_lift = plane.integrate(&weight, |p| f.eval(p.z, p.k).powi(2)).sqrt();
        let isometry = (f_lift - f_graph).abs() / f_graph;

        let lhs = plane.integrate(&weight, |p| u.eval(p.x) * f.eval(p.z, p.k));
        let rhs = gq.integrate(&weight, |z, k| uh.eval(tables, reebflow::reeb::GraphPoint { z, k }) * f.eval(z, k));
        let duality = (lhs - rhs).abs() / (u_norm * f_graph);

        let mut mult = 0.0f64;
        for e in &tables.edges {
            for s in e.samples.iter().filter(|s| s.is_computed()) {
                let fz = f.eval(s.z, e.edge);
                let mut scale = 0.0f64;
                let mut prod = 0.0;
                for (&x, w) in s.nodes.iter().zip(&s.mu) {
                    let p = ctx.reeb.project(&ctx.h, x)?;
                    scale = scale.max(u.eval(x).abs());
                    prod += w * u.eval(x) * f.eval(p.z, p.k);
                }
                let fmax = f.per_edge[e.edge].iter().map(|t| t.0.abs()).sum::<f64>();
                mult = mult.max((prod - s.average(|x| u.eval(x)) * fz).abs() / (scale * fmax));
            }
        }
        Ok([contraction, isometry, duality, mult])
    })?;
    let mut t = Table::new(&format!("operators_{name}"), &["function", "contraction_excess", "isometry_rel", "duality_rel", "multiplicativity_rel", "quadrature_tol"]);
    for (i, v) in rows.iter().enumerate() {
        t.push(vec![i.to_string(), num(v[0]), num(v[1]), num(v[2]), num(v[3]), num(th.operator_identity)]);
    }
    r.tables.push(t);
    let worst = |j: usize| rows.iter().map(|v| v[j]).fold(0.0f64, f64::max);
    let labels = ["contraction |u^∧| ≤ |u|", "isometry |f^∨| = |f|", "duality ⟨u, f^∨⟩ = ⟨u^∧, f⟩", "multiplicativity (u f^∨)^∧ = u^∧ f"];
    for (j, l) in labels.iter().enumerate() {
        r.checks.push(Check::at_most("C5", &format!("{name}: {l} over {n} functions"), worst(j), 0.0, th.operator_identity));
    }
    Ok(r)
}
