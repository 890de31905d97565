//! Averaging of fast incompressible advection on the plane.
//!
//! A Hamiltonian `H` on R² generates the flow `ẋ = ∇̄H = (∂₂H, −∂₁H)`. Adding
//! a Brownian forcing and speeding the flow up by `1/ε`, the slow component
//! `Π(X_ε)` converges to a diffusion on the Reeb graph of `H`. This crate
//! builds every piece needed to check that numerically:
//!
//! * [`hamiltonian`]: analytic test Hamiltonians and their critical points.
//! * [`reeb`]: the graph of level-set components, the projection `Π` and the
//!   graph distance.
//! * [`contour`] and [`coeffs`]: level curves, the period `T_k`, the flux
//!   `α_k`, enclosed areas, the averaging operator `∧`, the lift `∨`, the
//!   weight `γ` and the weighted norms.
//! * [`graphgen`]: a finite-volume generator for the graph diffusion with
//!   vertex gluing, its semigroup and a jump-process sampler.
//! * [`fastflow`]: the 2D fast-flow diffusion and the 2D stochastic PDE.
//! * [`noise`]: spatially homogeneous Wiener noise with an atomic spectral
//!   measure and its graph average.
//! * [`spdegraph`]: mild solutions of the stochastic PDE on the graph.
//! * [`fields`]: named and random test functions on the plane and the graph.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod coeffs;
pub mod contour;
pub mod error;
pub mod exec;
pub mod fields;
pub mod fastflow;
pub mod graphgen;
pub mod hamiltonian;
pub mod interp;
pub mod noise;
pub mod reeb;
pub mod rng;
pub mod spdegraph;
pub mod stats;

pub use error::{Error, Result};

/// A point of the plane.
pub type Point = [f64; 2];
