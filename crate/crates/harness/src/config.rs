//! Experiment configuration, read from TOML or JSON.
//!
//! Every section has defaults, so an empty file is a valid configuration
//! for the two-well scenario. Acceptance thresholds live in `[thresholds]`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use reebflow::coeffs::TableOptions;
use reebflow::exec::Exec;
use reebflow::fields::TestFunction;
use reebflow::hamiltonian::HamiltonianSpec;
use reebflow::noise::Atom;
use reebflow::spdegraph::Nonlinearity;
use reebflow::Point;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Also write whitespace-separated `.dat` copies of every table.
    pub dat: bool,
    pub exec: Exec,
    pub hamiltonian: HamiltonianSpec,
    pub domain: DomainConfig,
    pub tables: TableOptions,
    pub weight: WeightConfig,
    pub graph: GraphConfig,
    pub fastflow: FastFlowSection,
    pub probe: ProbeConfig,
    /// Test functions `u` for the semigroup comparisons.
    pub test_functions: Vec<TestFunction>,
    pub noise: NoiseConfig,
    pub spde: SpdeConfig,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    /// Half-width of the computational box.
    pub bound: f64,
    pub z_max: f64,
    /// Nodes per side of the region atlas.
    pub atlas_resolution: usize,
    /// Cells per side of the critical-point scan.
    pub critical_resolution: usize,
    /// Cells per side of the plane quadrature.
    pub plane_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub lambda: f64,
    pub z0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Finite-volume spacing in `z`.
    pub spacing: f64,
    /// Crank–Nicolson step.
    pub dt: f64,
    /// Jump-process paths per expectation.
    pub paths: usize,
    /// Total jumps for the occupancy check.
    pub jumps: usize,
    /// Evaluation times for the semigroup comparison.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastFlowSection {
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// `dt` as a fraction of the splitting limit `ε T_min / (4π)`.
    pub dt_fraction: f64,
    /// Upper bound on `dt` regardless of `ε`.
    pub dt_max: f64,
    pub paths: usize,
    pub max_rotation: f64,
    pub tau: f64,
    pub t_end: f64,
    /// Evaluation times in `[τ, T]`, including both ends.
    pub t_points: usize,
    /// Starting points of the weak-convergence sweep.
    pub starts: Vec<Point>,
    /// Rerun the smallest `ε` at `dt/2` on the same noise for the budget.
    pub halving_check: bool,
    /// `ε` and horizon of the martingale check.
    pub martingale_eps: f64,
    pub martingale_t: f64,
    /// Path dumps written by `simulate`.
    pub dump_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub eps: Vec<f64>,
    pub alpha: f64,
    pub paths: usize,
    pub starts: Vec<Point>,
    pub functions: Vec<TestFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub atoms: Vec<Atom>,
    pub samples: usize,
    pub pairs: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdeConfig {
    pub eps: Vec<f64>,
    /// Nodes per side of the 2D grid.
    pub grid: usize,
    /// Finite-volume spacing of the graph solver.
    pub graph_spacing: f64,
    pub dt_fraction: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub tau: f64,
    pub replicas: usize,
    pub b: Nonlinearity,
    pub g: Nonlinearity,
    pub initial: TestFunction,
    /// Refuse 2D runs with more node updates than this.
    pub cell_budget: f64,
    /// Scalar-reduction oracle.
    pub scalar_weight: f64,
    pub scalar_initial: f64,
    pub scalar_dt: f64,
    pub scalar_replicas: usize,
    pub scalar_grid: usize,
    pub scalar_reference_paths: usize,
    pub scalar_reference_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Monte Carlo agreement is `≤ se_multiplier · SE`.
    pub se_multiplier: f64,
    /// Relative tolerance for period, area and divergence identities.
    pub relative: f64,
    pub log_fit_residual: f64,
    pub operator_identity: f64,
    pub random_functions: usize,
    pub stationarity: f64,
    pub gluing: f64,
    /// Multiplier on the contour-quadrature budget in the probe.
    pub quadrature_multiplier: f64,
    /// Required relative decrease per rung of the SPDE ladder.
    pub spde_decrease: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_917,
            output_dir: PathBuf::from("out"),
            dat: false,
            exec: Exec::Parallel,
            hamiltonian: HamiltonianSpec::two_well(),
            domain: DomainConfig::default(),
            tables: TableOptions::default(),
            weight: WeightConfig::default(),
            graph: GraphConfig::default(),
            fastflow: FastFlowSection::default(),
            probe: ProbeConfig::default(),
            test_functions: vec![
                TestFunction::Random { seed: 11 },
                TestFunction::EnergyWave { freq: 2.0, phase: 0.3 },
                TestFunction::Coordinate { index: 0 },
            ],
            noise: NoiseConfig::default(),
            spde: SpdeConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { bound: 4.5, z_max: 8.0, atlas_resolution: 450, critical_resolution: 128, plane_resolution: 450 }
    }
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { lambda: 2.0, z0: None }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { spacing: 0.02, dt: 5e-3, paths: 20_000, jumps: 1_000_000, times: vec![0.1, 0.5, 1.0] }
    }
}

impl Default for FastFlowSection {
    fn default() -> Self {
        Self {
            eps: vec![0.2, 0.05, 0.0125],
            dt_fraction: 0.5,
            dt_max: 0.01,
            paths: 100_000,
            max_rotation: 0.1,
            tau: 0.25,
            t_end: 1.0,
            t_points: 3,
            starts: vec![[0.9, 0.3], [0.2, 0.25]],
            halving_check: true,
            martingale_eps: 0.05,
            martingale_t: 0.5,
            dump_paths: 4,
        }
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.2, 0.05, 0.0125],
            alpha: 0.6,
            paths: 100_000,
            starts: vec![[0.9, 0.3], [-1.05, 0.3]],
            functions: vec![TestFunction::Random { seed: 21 }, TestFunction::Random { seed: 22 }, TestFunction::Random { seed: 23 }],
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let pair = |l: [f64; 2], c: f64| [Atom { lambda: l, weight: c }, Atom { lambda: [-l[0], -l[1]], weight: c }];
        let mut atoms = vec![Atom { lambda: [0.0, 0.0], weight: 0.1 }];
        atoms.extend(pair([1.0, 0.0], 0.1));
        atoms.extend(pair([0.5, 1.5], 0.05));
        atoms.extend(pair([-2.0, 0.7], 0.05));
        Self { atoms, samples: 10_000, pairs: 10, t: 1.0 }
    }
}

impl Default for SpdeConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.025, 0.0125],
            grid: 61,
            graph_spacing: 0.05,
            dt_fraction: 0.5,
            dt_max: 0.01,
            t_end: 1.0,
            tau: 0.25,
            replicas: 20,
            b: Nonlinearity::Tanh { amplitude: -1.0, offset: 0.0 },
            g: Nonlinearity::Sine { amplitude: 0.2, frequency: 1.0, offset: 0.5 },
            initial: TestFunction::Random { seed: 31 },
            cell_budget: 5e10,
            scalar_weight: 0.25,
            scalar_initial: 0.5,
            scalar_dt: 0.01,
            scalar_replicas: 2000,
            scalar_grid: 9,
            scalar_reference_paths: 200_000,
            scalar_reference_steps: 1000,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            se_multiplier: 3.0,
            relative: 0.01,
            log_fit_residual: 0.05,
            operator_identity: 0.01,
            random_functions: 100,
            stationarity: 1e-10,
            gluing: 1e-9,
            quadrature_multiplier: 2.0,
            spde_decrease: 0.25,
        }
    }
}

impl ExperimentConfig {
    /// Reads TOML or JSON, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ladder) in [("fastflow.eps", &self.fastflow.eps), ("probe.eps", &self.probe.eps), ("spde.eps", &self.spde.eps)] {
            check_ladder(name, ladder)?;
        }
        let f = &self.fastflow;
        if !(f.tau > 0.0 && f.tau < f.t_end) {
            bail!("fastflow: need 0 < tau < t_end, got tau = {}, t_end = {}", f.tau, f.t_end);
        }
        if f.t_points < 2 {
            bail!("fastflow.t_points must be at least 2");
        }
        let s = &self.spde;
        if !(s.tau > 0.0 && s.tau < s.t_end) {
            bail!("spde: need 0 < tau < t_end, got tau = {}, t_end = {}", s.tau, s.t_end);
        }
        if !(self.domain.z_max > 0.0 && self.domain.bound > 0.0) {
            bail!("domain: bound and z_max must be positive");
        }
        if !(0.0 < f.dt_fraction && f.dt_fraction <= 1.0 && 0.0 < s.dt_fraction && s.dt_fraction <= 1.0) {
            bail!("dt_fraction must lie in (0, 1]");
        }
        if !(self.graph.spacing > 0.0 && s.graph_spacing > 0.0) {
            bail!("graph spacings must be positive");
        }
        if self.noise.atoms.is_empty() {
            bail!("noise.atoms must not be empty");
        }
        Ok(())
    }

    /// Evaluation times `τ = t₀ < … < t_{n−1} = T`.
    pub fn time_grid(&self) -> Vec<f64> {
        let f = &self.fastflow;
        (0..f.t_points).map(|i| f.tau + (f.t_end - f.tau) * i as f64 / (f.t_points - 1) as f64).collect()
    }
}

fn check_ladder(name: &str, ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        bail!("{name} must not be empty");
    }
    if ladder.iter().any(|&e| !(e > 0.0)) {
        bail!("{name} entries must be positive");
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        bail!("{name} must be strictly decreasing");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn ladder_and_time_window_are_checked() {
        let mut cfg = ExperimentConfig::default();
        cfg.fastflow.eps = vec![0.1, 0.2];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.fastflow.tau = 2.0;
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig = toml::from_str("[hamiltonian]\nname = \"radial\"\n").unwrap();
        assert_eq!(cfg.hamiltonian, HamiltonianSpec::Radial);
        assert_eq!(ExperimentConfig::default().time_grid(), vec![0.25, 0.625, 1.0]);
    }
}
