//! Planar, Sylvester, radial and Householder flows; composition, inverses
//! and exact pushforward densities.

mod json;
mod layer;
mod nonlinearity;
mod stack;

pub use json::FLOW_SCHEMA;
pub use layer::{FlowLayer, Householder, Planar, Radial, Sylvester, DEFAULT_EXCLUSION_MARGIN, GUARD_SLACK};
pub use nonlinearity::{CustomSmooth, Nonlinearity, ScalarFn};
pub use stack::FlowStack;

use crate::error::{Error, Result};

#[cfg(test)]
mod tests;
