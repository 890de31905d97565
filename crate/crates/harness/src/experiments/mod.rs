//! One function per experiment; each returns a [`Report`](crate::report::Report).

pub mod fastflow;
pub mod geometry;
pub mod graph;
pub mod noise;
pub mod spde;
