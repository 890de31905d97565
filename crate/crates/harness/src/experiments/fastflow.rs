//! Fast-flow experiments: the martingale identity, the averaging probe and
//! weak convergence of `Π(X_ε)` to the graph diffusion.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context as _, Result};
use reebflow::coeffs::{CoefficientTables, GraphFunction};
use reebflow::contour::ContourOptions;
use reebflow::fastflow::{dt_limit, min_period, FastFlow, FastFlowConfig, Observable};
use reebflow::fields::Field;
use reebflow::graphgen::GeneratorMatrix;
use reebflow::rng::derive_seed;
use reebflow::Point;

use crate::context::Context;
use crate::report::{num, Check, Report, Table};

/// Largest `dt` for `ε` that divides every time in `times`.
pub fn step_for(ctx: &Context, tables: &CoefficientTables, eps: f64, times: &[f64]) -> f64 {
    let f = &ctx.cfg.fastflow;
    let t_min = min_period(tables, ctx.reeb.graph.edges.len());
    let dt = (f.dt_fraction * dt_limit(eps, t_min)).min(f.dt_max);
    // Common unit of the times, resolved to 1e-6.
    let unit = times.iter().map(|t| (t * 1e6).round() as u64).fold(0, gcd) as f64 * 1e-6;
    if unit <= 0.0 {
        return dt;
    }
    unit / (unit / dt).ceil()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn flow_cfg(ctx: &Context, eps: f64, dt: f64, paths: usize, seed: u64) -> FastFlowConfig {
    FastFlowConfig {
        eps,
        dt,
        paths,
        seed,
        max_rotation: ctx.cfg.fastflow.max_rotation,
        noise_refine: 1,
        exec: ctx.cfg.exec,
    }
}

fn fmt_point(x: Point) -> String {
    format!("({:.3}, {:.3})", x[0], x[1])
}

/// `E[H(X_t) − H(x) − ½∫ΔH(X_s)ds] = 0` at each configured start.
pub fn martingale_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let f = &ctx.cfg.fastflow;
    let th = &ctx.cfg.thresholds;
    let mut r = Report::new("martingale", ctx.cfg.seed);
    let eps = f.martingale_eps;
    let dt = step_for(ctx, tables, eps, &[f.martingale_t]);
    let flow = FastFlow::new(&ctx.h, &ctx.reeb, tables, flow_cfg(ctx, eps, dt, f.paths, derive_seed(ctx.cfg.seed, 0x6d61)))?;
    let mut t = Table::new("martingale", &["x1", "x2", "eps", "dt", "t", "paths", "mean", "std_error"]);
    for &x in &f.starts {
        let e = flow.martingale_check(x, f.martingale_t)?;
        t.push(vec![num(x[0]), num(x[1]), num(eps), num(dt), num(f.martingale_t), f.paths.to_string(), num(e.mean), num(e.std_error)]);
        r.checks.push(
            Check::at_most("C8", &format!("Itô martingale residual at {}", fmt_point(x)), e.mean.abs(), e.std_error, th.se_multiplier * e.std_error)
                .with_detail(format!("N = {}, ε = {eps}, t = {}", f.paths, f.martingale_t)),
        );
    }
    r.tables.push(t);
    Ok(r)
}

/// The averaging probe over the `ε` ladder.
pub fn probe_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let p = &ctx.cfg.probe;
    let th = &ctx.cfg.thresholds;
    let mut r = Report::new("probe_averaging", ctx.cfg.seed);
    let contour = ContourOptions { resolution: 2 * ctx.cfg.tables.contour.resolution, ..ctx.cfg.tables.contour };
    let fields: Vec<(String, Field)> = p.functions.iter().map(|u| (u.name(), u.field(&ctx.h))).collect();
    let mut t = Table::new("probe", &["function", "x1", "x2", "eps", "t", "dt", "mean", "std_error", "target", "quadrature_budget", "residual", "stopped"]);
    for (si, &x) in p.starts.iter().enumerate() {
        for (fi, (name, u)) in fields.iter().enumerate() {
            let mut residuals = Vec::new();
            for &eps in &p.eps {
                let t_probe = eps.powf(p.alpha);
                let dt = step_for(ctx, tables, eps, &[]).min(t_probe);
                let seed = derive_seed(ctx.cfg.seed, (0x7072 << 16) + (si as u64) * 64 + fi as u64);
                let flow = FastFlow::new(&ctx.h, &ctx.reeb, tables, flow_cfg(ctx, eps, dt, p.paths, seed))?;
                let obs = |y: Point| u.eval(y);
                let res = flow.averaging_probe(&obs, x, p.alpha, &contour)?;
                t.push(vec![
                    name.clone(),
                    num(x[0]),
                    num(x[1]),
                    num(eps),
                    num(res.t),
                    num(res.t / (res.t / dt).ceil()),
                    num(res.estimate.mean),
                    num(res.estimate.std_error),
                    num(res.target),
                    num(res.quadrature_budget),
                    num(res.residual),
                    res.stopped.to_string(),
                ]);
                residuals.push(res);
            }
            let label = format!("{name} from {}", fmt_point(x));
            let decreasing = residuals.windows(2).all(|w| w[1].residual < w[0].residual);
            let seq = residuals.iter().map(|r| format!("{:.3e}", r.residual)).collect::<Vec<_>>().join(" > ");
            r.checks.push(Check::flag("C9", &format!("probe residual strictly decreasing, {label}"), decreasing, seq));
            let last = residuals.last().expect("non-empty ladder");
            let allowance = th.se_multiplier * last.estimate.std_error + th.quadrature_multiplier * last.quadrature_budget;
            r.checks.push(Check::at_most("C9", &format!("final probe residual, {label}"), last.residual, allowance, allowance).with_detail(format!("ε = {}", last.eps)));
        }
    }
    r.tables.push(t);
    Ok(r)
}

/// `Δ(ε) = sup_t |E_x u(X_ε(t)) − S̄(t)u^∧(Π x)|` over the ladder.
pub fn weak_report(ctx: &Context, tables: &CoefficientTables) -> Result<Report> {
    let f = &ctx.cfg.fastflow;
    let th = &ctx.cfg.thresholds;
    let times = ctx.cfg.time_grid();
    let mut r = Report::new("converge_weak", ctx.cfg.seed);
    if ctx.reeb.graph.saddles().next().is_none() {
        r.notes.push("Hamiltonian has no saddle; the comparison does not exercise vertex gluing".into());
    }
    let g = &ctx.reeb.graph;
    let fields: Vec<(String, Field)> = ctx.cfg.test_functions.iter().map(|u| (u.name(), u.field(&ctx.h))).collect();
    let obs: Vec<Box<dyn Fn(Point) -> f64 + Sync + '_>> = fields.iter().map(|(_, u)| Box::new(move |y: Point| u.eval(y)) as Box<dyn Fn(Point) -> f64 + Sync>).collect();
    let obs_refs: Vec<Observable<'_>> = obs.iter().map(|b| b.as_ref() as Observable<'_>).collect();

    // Graph side at two finite-volume resolutions, stopped at the cap like
    // the plane paths.
    let gc = &ctx.cfg.graph;
    let q = GeneratorMatrix::discretize(g, tables, gc.spacing)?.with_absorbing_cap();
    let q2 = GeneratorMatrix::discretize(g, tables, 2.0 * gc.spacing)?.with_absorbing_cap();
    let mut graph_side = Vec::new();
    for (_, u) in &fields {
        let uh = GraphFunction::average_of(tables, g, |y| u.eval(y));
        let (c, c2) = (q.project_graph_fn(tables, &uh), q2.project_graph_fn(tables, &uh));
        let mut per_t = Vec::new();
        for &t in &times {
            per_t.push((q.apply_semigroup(&c, t, gc.dt)?, q2.apply_semigroup(&c2, t, gc.dt)?));
        }
        graph_side.push(per_t);
    }

    let mut table = Table::new(
        "converge_weak",
        &["function", "x1", "x2", "eps", "dt", "t", "mc_mean", "mc_se", "graph", "graph_budget", "dt_budget", "delta", "stopped"],
    );
    // sup_t Δ per (function, start) per ε, with SE and budget at the argmax.
    let mut sup: Vec<Vec<Vec<(f64, f64, f64)>>> = vec![vec![Vec::new(); f.starts.len()]; fields.len()];
    for (ei, &eps) in f.eps.iter().enumerate() {
        let dt = step_for(ctx, tables, eps, &times);
        let last = ei + 1 == f.eps.len();
        for (si, &x) in f.starts.iter().enumerate() {
            let seed = derive_seed(ctx.cfg.seed, (0x7765 << 16) + si as u64);
            let flow = FastFlow::new(&ctx.h, &ctx.reeb, tables, flow_cfg(ctx, eps, dt, f.paths, seed))?;
            let e = flow.estimate_semigroup(x, &times, &obs_refs)?;
            let halved = if last && f.halving_check {
                let fine = FastFlow::new(&ctx.h, &ctx.reeb, tables, flow.cfg.halved()?)?;
                Some(fine.estimate_semigroup(x, &times, &obs_refs)?)
            } else {
                None
            };
            let gp = ctx.reeb.project(&ctx.h, x)?;
            for fi in 0..fields.len() {
                let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
                for (ti, &t) in times.iter().enumerate() {
                    let (v, v2) = &graph_side[fi][ti];
                    let graph = q.eval(v, gp);
                    let graph_budget = (graph - q2.eval(v2, gp)).abs();
                    let mc = e.estimates[ti][fi];
                    let dt_budget = halved.as_ref().map_or(0.0, |h| (h.estimates[ti][fi].mean - mc.mean).abs());
                    let delta = (mc.mean - graph).abs();
                    table.push(vec![
                        fields[fi].0.clone(),
                        num(x[0]),
                        num(x[1]),
                        num(eps),
                        num(dt),
                        num(t),
                        num(mc.mean),
                        num(mc.std_error),
                        num(graph),
                        num(graph_budget),
                        num(dt_budget),
                        num(delta),
                        e.stopped[ti].to_string(),
                    ]);
                    if delta > best.0 {
                        best = (delta, mc.std_error, graph_budget + dt_budget);
                    }
                }
                sup[fi][si].push(best);
            }
        }
    }
    r.tables.push(table);
    for (fi, (name, _)) in fields.iter().enumerate() {
        for (si, &x) in f.starts.iter().enumerate() {
            let s = &sup[fi][si];
            let label = format!("{name} from {}", fmt_point(x));
            let decreasing = s.windows(2).all(|w| w[1].0 < w[0].0);
            let seq = s.iter().map(|v| format!("{:.3e}", v.0)).collect::<Vec<_>>().join(" > ");
            r.checks.push(Check::flag("C10", &format!("sup_t Δ decreasing along the ladder, {label}"), decreasing, seq));
            let (delta, se, budget) = *s.last().expect("non-empty ladder");
            let allowance = th.se_multiplier * se + budget;
            r.checks.push(
                Check::at_most("C10", &format!("final sup_t Δ within 3 SE + budget, {label}"), delta, budget, allowance)
                    .with_detail(format!("ε = {}, N = {}", f.eps.last().copied().unwrap_or(0.0), f.paths)),
            );
        }
    }
    Ok(r)
}

/// Path dumps (`t,x1,x2,H,k`) and semigroup estimates at the largest `ε`.
pub fn simulate(ctx: &Context, tables: &CoefficientTables, dir: &Path) -> Result<Report> {
    let f = &ctx.cfg.fastflow;
    let mut r = Report::new("simulate", ctx.cfg.seed);
    let times = ctx.cfg.time_grid();
    let eps = f.eps[0];
    let dt = step_for(ctx, tables, eps, &times);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let flow = FastFlow::new(&ctx.h, &ctx.reeb, tables, flow_cfg(ctx, eps, dt, f.paths, derive_seed(ctx.cfg.seed, 0x7369)))?;
    for (si, &x) in f.starts.iter().enumerate() {
        for p in 0..f.dump_paths {
            let path = dir.join(format!("path_s{si}_p{p}.csv"));
            let w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            flow.write_path_csv(x, p as u64, f.t_end, 1, w)?;
        }
    }
    let fields: Vec<(String, Field)> = ctx.cfg.test_functions.iter().map(|u| (u.name(), u.field(&ctx.h))).collect();
    let obs: Vec<Box<dyn Fn(Point) -> f64 + Sync + '_>> = fields.iter().map(|(_, u)| Box::new(move |y: Point| u.eval(y)) as Box<dyn Fn(Point) -> f64 + Sync>).collect();
    let obs_refs: Vec<Observable<'_>> = obs.iter().map(|b| b.as_ref() as Observable<'_>).collect();
    let mut t = Table::new("semigroup_estimates", &["function", "x1", "x2", "eps", "dt", "t", "paths", "seed", "mean", "std_error", "stopped"]);
    for &x in &f.starts {
        let e = flow.estimate_semigroup(x, &times, &obs_refs)?;
        for (ti, &time) in times.iter().enumerate() {
            for (fi, (name, _)) in fields.iter().enumerate() {
                let est = e.estimates[ti][fi];
                t.push(vec![
                    name.clone(),
                    num(x[0]),
                    num(x[1]),
                    num(eps),
                    num(dt),
                    num(time),
                    f.paths.to_string(),
                    flow.cfg.seed.to_string(),
                    num(est.mean),
                    num(est.std_error),
                    e.stopped[ti].to_string(),
                ]);
            }
        }
    }
    r.tables.push(t);
    Ok(r)
}
