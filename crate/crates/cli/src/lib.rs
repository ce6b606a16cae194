//! Experiment harness: problem generation, seeded sweeps, evaluation and
//! report artifacts.

pub mod cell;
pub mod config;
pub mod problem;
pub mod report;
pub mod seeds;
pub mod svg;
pub mod sweep;
