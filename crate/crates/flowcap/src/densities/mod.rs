//! Probability distributions: log-density, gradient, 1D CDF/quantile,
//! seeded sampling.
//!
//! Every concrete type implements [`Density`]. One-dimensional methods
//! (`cdf`, `quantile`, …) take and return scalars; points in ℝ^d are
//! slices.

mod gaussian;
mod mixture;
mod numeric1d;
mod piecewise;
mod product;
mod radial;
mod relaxation;
pub mod spec;
mod student;

pub use gaussian::{Gaussian1D, GaussianD};
pub use mixture::MixtureGaussianD;
pub use numeric1d::{bimodal_target, fig1_target, QuadratureDensity1D};
pub use piecewise::{PiecewiseConstant1D, PiecewiseGaussian1D};
pub use product::{ProductDensity1DPow, ScalarKernel};
pub use radial::{RadialDensity, RadialKind};
pub use relaxation::{full_support_relaxation, RelaxedDensity1D};
pub use student::StudentT;

use crate::error::{check_dim, Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Debug;
use std::sync::Arc;

pub type DynDensity = Arc<dyn Density>;

/// Tolerance for the tail-consistency partial-sum equalities.
pub const TAIL_CONSISTENCY_TOL: f64 = 1e-10;

pub trait Density: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// log p(z); −∞ where the density vanishes. Callers go through
    /// [`log_density`] for the dimension check.
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64>;

    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn cdf(&self, _x: f64) -> Result<f64> {
        Err(Error::Unsupported(format!("cdf of {}", self.name())))
    }

    fn sf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.cdf(x)?)
    }

    /// Generalized inverse inf{x : F(x) ≥ u}.
    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        numeric_quantile(self, u)
    }

    /// x with 1 − F(x) = q, precise for small q.
    fn isf(&self, q: f64) -> Result<f64> {
        check_unit(q)?;
        if q >= 0.5 {
            return self.quantile(1.0 - q);
        }
        numeric_isf(self, q)
    }

    /// Support as a union of (possibly unbounded) open intervals, 1D only.
    fn support(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY)]
    }

    /// Points where the 1D density is discontinuous or non-smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Rough location and spread, used for bracketing and default windows.
    fn location_scale(&self) -> (Vec<f64>, f64);

    fn sample_with(&self, _rng: &mut dyn RngCore, _n: usize) -> Result<Vec<Vec<f64>>> {
        Err(Error::Unsupported(format!("sampling from {}", self.name())))
    }

    fn name(&self) -> String;

    /// Serializable description, when the type belongs to the catalog.
    fn to_spec(&self) -> Option<spec::DistSpec> {
        None
    }
}

pub fn log_density(dist: &dyn Density, z: &[f64]) -> Result<f64> {
    check_dim(dist.dim(), z.len())?;
    dist.log_density_unchecked(z)
}

pub fn grad_log_density(dist: &dyn Density, z: &[f64]) -> Result<Vec<f64>> {
    check_dim(dist.dim(), z.len())?;
    dist.grad_log_density_unchecked(z)
}

pub fn density(dist: &dyn Density, z: &[f64]) -> Result<f64> {
    Ok(log_density(dist, z)?.exp())
}

/// Scalar pdf of a 1D density.
pub fn pdf1(dist: &dyn Density, x: f64) -> f64 {
    dist.log_density_unchecked(&[x]).map(f64::exp).unwrap_or(0.0)
}

pub fn cdf_1d(dist: &dyn Density, x: f64) -> Result<f64> {
    check_dim(1, dist.dim())?;
    dist.cdf(x)
}

pub fn quantile_1d(dist: &dyn Density, u: f64) -> Result<f64> {
    check_dim(1, dist.dim())?;
    dist.quantile(u)
}

/// n seeded draws; identical seeds give identical output.
pub fn sample(dist: &dyn Density, seed: u64, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dist.sample_with(&mut rng, n)
}

pub(crate) fn check_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("probability {u} outside (0,1)")))
    }
}

fn bracket<D: Density + ?Sized>(
    d: &D,
    mut below: impl FnMut(f64) -> Result<bool>,
) -> Result<(f64, f64)> {
    // Find lo with below(lo) and hi with !below(hi).
    let sup = d.support();
    let first = sup.first().map(|s| s.0).unwrap_or(f64::NEG_INFINITY);
    let last = sup.last().map(|s| s.1).unwrap_or(f64::INFINITY);
    let (c, s) = d.location_scale();
    let c = c[0];
    let s = if s > 0.0 { s } else { 1.0 };
    let mut lo = if first.is_finite() { first } else { c - s };
    let mut hi = if last.is_finite() { last } else { c + s };
    let mut step = s;
    let mut k = 0;
    while !below(lo)? {
        if first.is_finite() {
            break;
        }
        lo -= step;
        step *= 2.0;
        k += 1;
        if k > 2000 {
            return Err(Error::NumericRange("quantile bracket (lower)".into()));
        }
    }
    step = s;
    k = 0;
    while below(hi)? {
        if last.is_finite() {
            break;
        }
        hi += step;
        step *= 2.0;
        k += 1;
        if k > 2000 {
            return Err(Error::NumericRange("quantile bracket (upper)".into()));
        }
    }
    Ok((lo, hi))
}

/// Bisection/Newton on the CDF; converges to the left end of plateaus.
pub(crate) fn numeric_quantile<D: Density + ?Sized>(d: &D, u: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket(d, |x| Ok(d.cdf(x)? < u))?;
    invert_increasing(
        |x| d.cdf(x).map(|f| f - u),
        |x| pdf_unchecked(d, x),
        &mut lo,
        &mut hi,
    )
}

pub(crate) fn numeric_isf<D: Density + ?Sized>(d: &D, q: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket(d, |x| Ok(d.sf(x)? > q))?;
    invert_increasing(
        |x| d.sf(x).map(|s| q - s),
        |x| pdf_unchecked(d, x),
        &mut lo,
        &mut hi,
    )
}

fn pdf_unchecked<D: Density + ?Sized>(d: &D, x: f64) -> f64 {
    d.log_density_unchecked(&[x]).map(f64::exp).unwrap_or(0.0)
}

/// Smallest root of a nondecreasing g on [lo, hi] with g(lo) < 0 ≤ g(hi).
pub(crate) fn invert_increasing(
    mut g: impl FnMut(f64) -> Result<f64>,
    mut dg: impl FnMut(f64) -> f64,
    lo: &mut f64,
    hi: &mut f64,
) -> Result<f64> {
    let mut x = 0.5 * (*lo + *hi);
    for _ in 0..400 {
        let v = g(x)?;
        let dv = dg(x);
        if v < 0.0 {
            *lo = x;
        } else {
            *hi = x;
        }
        if v == 0.0 && dv > 0.0 {
            return Ok(x);
        }
        if *hi - *lo <= 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            return Ok(*hi);
        }
        if dv > 0.0 && v != 0.0 {
            let n = x - v / dv;
            if n > *lo && n < *hi {
                if (n - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                    return Ok(n);
                }
                x = n;
                continue;
            }
        }
        x = 0.5 * (*lo + *hi);
    }
    Ok(*hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let g = GaussianD::standard(2);
        assert!(matches!(log_density(&g, &[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn quantile_rejects_endpoints() {
        let g = Gaussian1D::standard();
        assert!(quantile_1d(&g, 0.0).is_err());
        assert!(quantile_1d(&g, 1.0).is_err());
    }
}
