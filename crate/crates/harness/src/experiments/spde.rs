//! Stochastic PDE experiments: the scalar-reduction oracle, the weighted
//! semigroup convergence and the coupled convergence smoke test.

use anyhow::{bail, Result};
use reebflow::coeffs::{CoefficientTables, GraphFunction};
use reebflow::fastflow::{dt_limit, min_period, Spde2d, Spde2dConfig};
use reebflow::graphgen::GeneratorMatrix;
use reebflow::noise::{Atom, NoiseBasis, SpectralMeasure};
use reebflow::rng::derive_seed;
use reebflow::spdegraph::{functional, scalar_reference, GraphSpde, GraphSpdeConfig, Nonlinearity};
use reebflow::stats::Estimate;

use crate::context::Context;
use crate::experiments::noise::measure;
use crate::report::{num, Check, Report, Table};

fn spde_dt(ctx: &Context, tables: &CoefficientTables, eps: f64) -> f64 {
    let s = &ctx.cfg.spde;
    let t_min = min_period(tables, ctx.reeb.graph.edges.len());
    let dt = (s.dt_fraction * dt_limit(eps, t_min)).min(s.dt_max);
    // Whole number of steps to the horizon.
    s.t_end / (s.t_end / dt).ceil()
}

fn guard(cfg: &Spde2dConfig, budget: f64) -> Result<()> {
    let cells = cfg.cell_updates();
    if cells > budget {
        bail!("2D run needs {cells:.3e} node updates, above the configured cell budget {budget:.3e}");
    }
    Ok(())
}

/// Constant data with constant-mode noise against a scalar SDE reference.
pub fn scalar_oracle_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let s = &ctx.cfg.spde;
    let th = &ctx.cfg.thresholds;
    let mut r = Report::new("scalar_oracle", ctx.cfg.seed);
    let mu = SpectralMeasure::new(vec![Atom { lambda: [0.0, 0.0], weight: s.scalar_weight }])?;
    let basis = NoiseBasis::build(&mu, tables, &ctx.reeb.graph);
    let seed = derive_seed(ctx.cfg.seed, 0x7363);
    let steps = (s.t_end / s.scalar_dt).round() as usize;
    let dt = s.t_end / steps as f64;

    let q = GeneratorMatrix::discretize(&ctx.reeb.graph, tables, s.graph_spacing)?;
    let gcfg = GraphSpdeConfig { dt, t_end: s.t_end, replicas: s.scalar_replicas, seed, snapshot_every: steps, exec: ctx.cfg.exec };
    let graph = GraphSpde::new(&q, tables, &basis, gcfg)?;
    let u0 = vec![s.scalar_initial; q.len()];
    let graph_final = ctx.cfg.exec.try_map(s.scalar_replicas, |i| -> Result<f64> {
        let p = graph.solve_mild(&u0, &s.b, &s.g, i as u64)?;
        Ok(p.states.last().expect("final state")[0])
    })?;

    log::info!("scalar oracle: graph solver done");
    let eps = s.eps[0];
    let cfg2 = Spde2dConfig {
        eps,
        dt: s.t_end / (s.t_end / dt.min(dt_limit(eps, min_period(tables, ctx.reeb.graph.edges.len())))).ceil(),
        t_end: s.t_end,
        grid: s.scalar_grid,
        replicas: s.scalar_replicas,
        seed,
        max_rotation: ctx.cfg.fastflow.max_rotation,
        exec: ctx.cfg.exec,
    };
    guard(&cfg2, s.cell_budget)?;
    let plane = Spde2d::new(&ctx.h, &ctx.reeb, tables, &basis, cfg2)?;
    let v0 = vec![s.scalar_initial; plane.grid.len()];
    let centre = plane.grid.len() / 2;
    let plane_final = ctx.cfg.exec.try_map(s.scalar_replicas, |i| -> Result<f64> { Ok(plane.solve(&v0, &s.b, &s.g, i as u64)?[centre]) })?;

    log::info!("scalar oracle: plane solver done");
    let reference = scalar_reference(
        &s.b,
        &s.g,
        s.scalar_weight.sqrt(),
        s.scalar_initial,
        s.t_end,
        s.scalar_reference_steps,
        s.scalar_reference_paths,
        derive_seed(ctx.cfg.seed, 0x7265),
        ctx.cfg.exec,
    );

    log::info!("scalar oracle: reference done");
    let mut t = Table::new("scalar_oracle", &["solver", "functional", "dt", "replicas", "mean", "std_error", "reference", "reference_se", "abs_diff"]);
    let phis: [(&str, fn(f64) -> f64); 2] = [("u", |u| u), ("u^2", |u| u * u)];
    for (solver, vals, sdt) in [("graph", &graph_final, dt), ("plane", &plane_final, cfg2.dt)] {
        for (pname, phi) in phis {
            let a = functional(vals, phi);
            let b = functional(&reference, phi);
            let (diff, se) = a.diff(&b);
            t.push(vec![solver.into(), pname.into(), num(sdt), vals.len().to_string(), num(a.mean), num(a.std_error), num(b.mean), num(b.std_error), num(diff)]);
            r.checks.push(
                Check::at_most("C12", &format!("{solver} solver, E[{pname}] vs scalar reference"), diff, se, th.se_multiplier * se)
                    .with_detail(format!("{} replicas, reference {} paths × {} steps", vals.len(), reference.len(), s.scalar_reference_steps)),
            );
        }
    }
    r.tables.push(t);
    Ok(r)
}

/// Per `ε`: `sup_{τ ≤ t ≤ T} |S_ε(t)u − (S̄(t)u^∧)^∨|_{H_γ}` with `u` the
/// configured initial field, from the deterministic 2D and graph solvers.
pub fn hgamma_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let s = &ctx.cfg.spde;
    let ladder = &ctx.cfg.fastflow.eps;
    let mut r = Report::new("converge_hgamma", ctx.cfg.seed);
    let weight = ctx.weight()?;
    let mu = SpectralMeasure::new(vec![Atom { lambda: [0.0, 0.0], weight: 1.0 }])?;
    let basis = NoiseBasis::build(&mu, tables, &ctx.reeb.graph);
    let zero = Nonlinearity::Constant { value: 0.0 };
    let q = GeneratorMatrix::discretize(&ctx.reeb.graph, tables, s.graph_spacing)?;
    let u = s.initial.field(&ctx.h);
    let ubar0 = q.project_graph_fn(tables, &GraphFunction::average_of(tables, &ctx.reeb.graph, |x| u.eval(x)));
    let mut t = Table::new("converge_hgamma", &["eps", "dt", "grid", "sup_norm", "u_norm", "sanity_bound"]);
    let mut vals = Vec::new();
    for &eps in ladder {
        let dt = spde_dt(ctx, tables, eps);
        let cfg2 = Spde2dConfig { eps, dt, t_end: s.t_end, grid: s.grid, replicas: 1, seed: ctx.cfg.seed, max_rotation: ctx.cfg.fastflow.max_rotation, exec: ctx.cfg.exec };
        guard(&cfg2, s.cell_budget)?;
        let plane = Spde2d::new(&ctx.h, &ctx.reeb, tables, &basis, cfg2)?;
        let gcfg = GraphSpdeConfig { dt, t_end: s.t_end, replicas: 1, seed: ctx.cfg.seed, snapshot_every: 1, exec: ctx.cfg.exec };
        let graph = GraphSpde::new(&q, tables, &basis, gcfg)?;
        let u0 = plane.grid.sample(|x| u.eval(x));
        let sup = plane.coupled_sup_difference(&ctx.reeb, &graph, &u0, &ubar0, &zero, &zero, &weight, s.tau)?[0].sqrt();
        let u_norm = plane.hgamma_norm_sq(&weight, &u0).sqrt();
        t.push(vec![num(eps), num(dt), s.grid.to_string(), num(sup), num(u_norm), num(2.0 * u_norm)]);
        vals.push((sup, u_norm));
    }
    r.tables.push(t);
    let decreasing = vals.windows(2).all(|w| w[1].0 < w[0].0);
    let seq = vals.iter().map(|v| format!("{:.3e}", v.0)).collect::<Vec<_>>().join(" > ");
    r.checks.push(Check::flag("hgamma", "weighted semigroup difference decreasing along the ladder", decreasing, seq));
    let sane = vals.iter().all(|v| v.0 <= 2.0 * v.1);
    r.checks.push(Check::flag("hgamma", "difference below 2|u| (contraction sanity bound)", sane, ""));
    Ok(r)
}

/// `E sup_{τ ≤ t ≤ T} |u_ε(t) − ū(t)^∨|²_{H_γ}` over replicas, both
/// equations driven by the same normals. Indicative only.
pub fn spde_smoke_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let s = &ctx.cfg.spde;
    let th = &ctx.cfg.thresholds;
    let mut r = Report::new("converge_spde", ctx.cfg.seed);
    r.smoke = true;
    let weight = ctx.weight()?;
    let mu = measure(ctx)?;
    let basis = NoiseBasis::build(&mu, tables, &ctx.reeb.graph);
    let q = GeneratorMatrix::discretize(&ctx.reeb.graph, tables, s.graph_spacing)?;
    let u = s.initial.field(&ctx.h);
    let ubar0 = q.project_graph_fn(tables, &GraphFunction::average_of(tables, &ctx.reeb.graph, |x| u.eval(x)));
    // One step size for the whole ladder, so every rung sees the same noise.
    let dt = spde_dt(ctx, tables, *s.eps.last().expect("non-empty ladder"));
    let seed = derive_seed(ctx.cfg.seed, 0x7370);
    let mut t = Table::new("converge_spde", &["eps", "dt", "grid", "replicas", "mean_sup_sq", "std_error", "decrease"]);
    let mut ests: Vec<Estimate> = Vec::new();
    for &eps in &s.eps {
        let cfg2 = Spde2dConfig { eps, dt, t_end: s.t_end, grid: s.grid, replicas: s.replicas, seed, max_rotation: ctx.cfg.fastflow.max_rotation, exec: ctx.cfg.exec };
        guard(&cfg2, s.cell_budget)?;
        log::info!("converge spde: ε = {eps}, dt = {dt:.3e}, {} steps, {} replicas", cfg2.steps(), s.replicas);
        let plane = Spde2d::new(&ctx.h, &ctx.reeb, tables, &basis, cfg2)?;
        let gcfg = GraphSpdeConfig { dt, t_end: s.t_end, replicas: s.replicas, seed, snapshot_every: 1, exec: ctx.cfg.exec };
        let graph = GraphSpde::new(&q, tables, &basis, gcfg)?;
        let u0 = plane.grid.sample(|x| u.eval(x));
        let sups = plane.coupled_sup_difference(&ctx.reeb, &graph, &u0, &ubar0, &s.b, &s.g, &weight, s.tau)?;
        let e = Estimate::from_samples(&sups);
        let dec = ests.last().map(|p| 1.0 - e.mean / p.mean);
        t.push(vec![num(eps), num(dt), s.grid.to_string(), s.replicas.to_string(), num(e.mean), num(e.std_error), dec.map(num).unwrap_or_default()]);
        if let Some(d) = dec {
            let prev = ests.last().expect("previous rung");
            r.checks.push(
                Check::at_least("C13", &format!("SMOKE: relative decrease ε = {} → {eps}", s.eps[ests.len() - 1]), d, e.std_error / prev.mean, th.spde_decrease)
                    .with_detail(format!("{:.4e} → {:.4e}", prev.mean, e.mean)),
            );
        }
        ests.push(e);
    }
    r.tables.push(t);
    r.notes.push("converge spde is a desk-scale smoke test, not a reproduction of the limit theorem".into());
    Ok(r)
}
