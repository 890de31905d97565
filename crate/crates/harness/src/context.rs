//! The shared pipeline: Hamiltonian, critical points, Reeb graph,
//! coefficient tables and weight, built once per run.

use anyhow::{Context as _, Result};
use reebflow::coeffs::{CoefficientTables, Weight};
use reebflow::hamiltonian::{CriticalPoint, Hamiltonian, HamiltonianSpec};
use reebflow::reeb::{build_reeb, Reeb};

use crate::config::ExperimentConfig;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub h: Hamiltonian,
    pub critical_points: Vec<CriticalPoint>,
    pub reeb: Reeb,
}

impl Context {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        Self::build_for(cfg, cfg.hamiltonian.clone())
    }

    /// Same domain settings, different Hamiltonian.
    pub fn build_for(cfg: &ExperimentConfig, spec: HamiltonianSpec) -> Result<Self> {
        let d = &cfg.domain;
        let h = Hamiltonian::new(spec, d.bound).context("constructing the Hamiltonian")?;
        let report = h.find_critical_points(d.critical_resolution).context("locating critical points")?;
        if !report.unresolved_cells.is_empty() {
            log::warn!("{} scan cells did not converge to a critical point", report.unresolved_cells.len());
        }
        let reeb = build_reeb(&h, &report.points, d.z_max, d.atlas_resolution).context("building the Reeb graph")?;
        Ok(Self { cfg: cfg.clone(), h, critical_points: report.points, reeb })
    }

    pub fn tables(&self) -> Result<CoefficientTables> {
        let opts = reebflow::coeffs::TableOptions { exec: self.cfg.exec, ..self.cfg.tables };
        CoefficientTables::build(&self.h, &self.reeb, &opts).context("building coefficient tables")
    }

    pub fn weight(&self) -> Result<Weight> {
        Weight::for_graph(&self.reeb.graph, self.cfg.weight.lambda, self.cfg.weight.z0).context("building the weight")
    }
}
