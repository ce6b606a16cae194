//! Estimation of convex polytopes from membership line searches.

pub mod active;
pub(crate) mod conic;
pub mod fitter;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod metrics;
