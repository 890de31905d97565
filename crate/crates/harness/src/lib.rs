//! Configuration, experiments and result emission for the `reebflow` CLI
//! and the acceptance suite.

pub mod config;
pub mod context;
pub mod experiments;
pub mod report;
