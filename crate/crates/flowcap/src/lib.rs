//! Normalizing-flow capacity toolkit: densities, planar/Sylvester/radial/
//! Householder flows, constructive 1D approximation, linear compilation,
//! topology checks, capacity bounds and ℓ1 metrics.

pub mod densities;
pub mod capacity;
pub mod construct1d;
pub mod error;
pub mod flows;
pub mod linalg;
pub mod lincompile;
pub mod metrics;
pub mod special;
pub mod topology;

pub use error::{Error, Result};
