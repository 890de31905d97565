//! `reebflow` command line.
//!
//! Every subcommand writes its tables as CSV (plus `.dat` with `--dat`) and a
//! JSON summary into the output directory, prints one line per check and
//! exits 1 if any check failed. Usage errors exit 2.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use reebflow::exec::Exec;
use reebflow::hamiltonian::HamiltonianSpec;
use reebflow_harness::config::ExperimentConfig;
use reebflow_harness::context::Context;
use reebflow_harness::experiments::{fastflow, geometry, graph, noise, spde};
use reebflow_harness::report::Report;

#[derive(Parser)]
#[command(name = "reebflow", version, about = "Averaging of fast Hamiltonian flows on Reeb graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hamiltonian family, with its default parameters.
    #[arg(long, global = true, value_enum)]
    hamiltonian: Option<Family>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write whitespace-separated `.dat` tables.
    #[arg(long, global = true)]
    dat: bool,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Comma-separated ε ladder, overriding the one of the subcommand.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Monte Carlo paths or replicas, overriding the one of the subcommand.
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Radial,
    Anisotropic,
    Twowell,
}

#[derive(Subcommand)]
enum Command {
    /// Critical points, Reeb graph and region atlas.
    Reeb {
        /// Write the graph as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Coefficient tables and the averaging-operator identities.
    Coeffs,
    /// Generator checks, graph semigroup, martingale check and path dumps.
    Simulate,
    /// Convergence sweeps over ε.
    Converge {
        #[arg(value_enum)]
        which: Converge,
    },
    /// Noise basis and graph-averaged noise covariance.
    NoiseCheck,
    /// Pointwise averaging residual along the ε ladder.
    ProbeAveraging,
}

#[derive(Clone, Copy, ValueEnum)]
enum Converge {
    Weak,
    Hgamma,
    Spde,
}

fn configure(c: &Common, command: &Command) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = c.hamiltonian {
        cfg.hamiltonian = match f {
            Family::Radial => HamiltonianSpec::Radial,
            Family::Anisotropic => HamiltonianSpec::anisotropic(),
            Family::Twowell => HamiltonianSpec::two_well(),
        };
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.dat |= c.dat;
    if c.sequential {
        cfg.exec = Exec::Sequential;
    }
    let spde_ladder = matches!(command, Command::Converge { which: Converge::Spde });
    if let Some(e) = &c.eps {
        if spde_ladder {
            cfg.spde.eps = e.clone();
        } else {
            cfg.fastflow.eps = e.clone();
        }
    }
    if let Some(p) = c.paths {
        match command {
            Command::ProbeAveraging => cfg.probe.paths = p,
            Command::Converge { which: Converge::Spde } => cfg.spde.replicas = p,
            Command::NoiseCheck => cfg.noise.samples = p,
            Command::Simulate => {
                cfg.graph.paths = p;
                cfg.fastflow.paths = p;
            }
            _ => cfg.fastflow.paths = p,
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_reeb_json(ctx: &Context, path: &Path) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Out<'a> {
        hamiltonian: &'a HamiltonianSpec,
        critical_points: &'a [reebflow::hamiltonian::CriticalPoint],
        graph: &'a reebflow::reeb::ReebGraph,
    }
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    let out = Out { hamiltonian: ctx.h.spec(), critical_points: &ctx.critical_points, graph: &ctx.reeb.graph };
    std::fs::write(path, serde_json::to_string_pretty(&out)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = configure(&cli.common, &cli.command)?;
    let dir = cfg.output_dir.clone();
    let ctx = Context::build(&cfg)?;
    log::info!("{}: {} vertices, {} edges", cfg.hamiltonian.name(), ctx.reeb.graph.vertices.len(), ctx.reeb.graph.edges.len());
    let mut report = match &cli.command {
        Command::Reeb { json } => {
            let r = geometry::reeb_report(&ctx);
            let atlas = dir.join("atlas.bin");
            std::fs::create_dir_all(&dir)?;
            ctx.reeb.atlas.write_to(BufWriter::new(File::create(&atlas)?))?;
            write_reeb_json(&ctx, &json.clone().unwrap_or_else(|| dir.join("reeb_graph.json")))?;
            r
        }
        Command::Coeffs => {
            let tables = ctx.tables()?;
            let mut r = Report::new("coeffs", cfg.seed);
            r.merge(geometry::coefficient_report(&ctx, &tables));
            r.merge(geometry::operator_report(&ctx, &tables)?);
            r
        }
        Command::Simulate => {
            let tables = ctx.tables()?;
            let mut r = Report::new("simulate", cfg.seed);
            r.merge(graph::generator_report(&ctx, &tables)?);
            r.merge(graph::semigroup_report(&ctx, &tables)?);
            r.merge(fastflow::martingale_report(&ctx, &tables)?);
            r.merge(fastflow::simulate(&ctx, &tables, &dir.join("paths"))?);
            r
        }
        Command::Converge { which } => {
            let tables = ctx.tables()?;
            match which {
                Converge::Weak => fastflow::weak_report(&ctx, &tables)?,
                Converge::Hgamma => spde::hgamma_report(&ctx, &tables)?,
                Converge::Spde => {
                    let mut r = spde::spde_smoke_report(&ctx, &tables)?;
                    r.merge(spde::scalar_oracle_report(&ctx, &tables)?);
                    r
                }
            }
        }
        Command::NoiseCheck => noise::noise_report(&ctx, &ctx.tables()?)?,
        Command::ProbeAveraging => fastflow::probe_report(&ctx, &ctx.tables()?)?,
    };
    let summary = report.write(&dir, cfg.dat, &cfg)?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("summary: {}", summary.display());
    if report.checks.is_empty() {
        bail!("no checks were run");
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
