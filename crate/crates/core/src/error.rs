use thiserror::Error;

use crate::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({}, {}) lies outside the evaluation domain |x|∞ ≤ {bound}", .point[0], .point[1])]
    OutOfDomain { point: Point, bound: f64 },

    #[error("point ({}, {}) lies above the energy cap z_max = {z_max}", .point[0], .point[1])]
    AboveCap { point: Point, z_max: f64 },

    #[error("genericity violated: {0}")]
    Genericity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("critical bands of saddles {0} and {1} overlap; use a finer atlas grid")]
    BandOverlap(usize, usize),

    #[error("Reeb graph construction failed: {0}")]
    Reeb(String),

    #[error("level {z} is inside a critical band of edge {edge}; use the saddle log-fit instead")]
    NearSingular { z: f64, edge: usize },

    #[error("contour extraction failed at z = {z} on edge {edge}: {reason}")]
    Contour { z: f64, edge: usize, reason: String },

    #[error("singular integrand: |∇H| = {grad_norm:e} at ({}, {})", .point[0], .point[1])]
    SingularIntegrand { point: Point, grad_norm: f64 },

    #[error("coefficient table error: {0}")]
    Table(String),

    #[error("linear solve failed with residual {residual:e}")]
    Solver { residual: f64 },

    #[error("solution diverged: norm {norm:e} at t = {t}")]
    Divergence { norm: f64, t: f64 },

    #[error("advection step drifted H by {drift:e} (limit {limit:e}); reduce the substep")]
    StepSize { drift: f64, limit: f64 },

    #[error("spectral measure is not symmetric under λ ↦ −λ: {0}")]
    Asymmetric(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),
}
