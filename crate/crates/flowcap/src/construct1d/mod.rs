//! Constructive one-dimensional approximation: CDF transport, ReLU
//! piece-fixing, piecewise-Gaussian synthesis and the piecewise-constant →
//! piecewise-Gaussian pipeline.

mod pwc;
mod pwg;
mod transport;

pub use pwc::{l1_pwg_pwc, proof_delta, pwc_to_pwg, pwc_to_pwg_with, tail_mass, PwcToPwgOptions, DEFAULT_PIECE_CAP, ZERO_SIGMA_FACTOR};
pub use pwg::{affine_gadget, push_piecewise, pwg_synthesize, relu_piece_fix, PwgSynthesis, PIECE_FIX_TOL};
pub use transport::{cdf_transport, Segment, SegmentKind, TransportMap1D, TransportPushforward, MASS_MATCH_TOL};

use crate::densities::{pdf1, Density, Gaussian1D, PiecewiseConstant1D, PiecewiseGaussian1D};
use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::metrics::l1_grid_window;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub pieces: usize,
    pub layers: usize,
    pub achieved_l1: f64,
    pub elided_identity_layers: usize,
}

#[derive(Debug, Clone)]
pub struct Approximation1D {
    pub base: Gaussian1D,
    pub stack: FlowStack,
    pub pwc: PiecewiseConstant1D,
    pub pwg: PiecewiseGaussian1D,
    pub report: SynthesisReport,
}

/// Grid points used for the reported ℓ1 error.
pub const REPORT_GRID_POINTS: usize = (1 << 15) + 1;

fn hull(p: &dyn Density) -> Result<(f64, f64)> {
    let s = p.support();
    let lo = s[0].0;
    let hi = s.last().unwrap().1;
    let lo = if lo.is_finite() { lo } else { p.quantile(1e-9)? };
    let hi = if hi.is_finite() { hi } else { p.isf(1e-9)? };
    Ok((lo, hi))
}

/// p → equal-width piecewise-constant bins (midpoint values) → tail-consistent
/// piecewise Gaussian (one piece per bin) → ReLU planar stack on a Gaussian.
pub fn approximate_target_1d(p: &dyn Density, eps: f64, n_pieces: usize) -> Result<Approximation1D> {
    if p.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: p.dim() });
    }
    if n_pieces == 0 {
        return Err(Error::contract("n_pieces must be positive"));
    }
    let (lo, hi) = hull(p)?;
    let h = (hi - lo) / n_pieces as f64;
    let mut bps: Vec<f64> = (0..=n_pieces).map(|k| lo + h * k as f64).collect();
    bps[n_pieces] = hi;
    let vals: Vec<f64> = (0..n_pieces).map(|k| pdf1(p, 0.5 * (bps[k] + bps[k + 1]))).collect();
    let pwc = PiecewiseConstant1D::normalized(bps, vals)?;
    let pwg = pwc_to_pwg_with(&pwc, eps, PwcToPwgOptions { subdivide: false, ..Default::default() })?;
    let synth = pwg_synthesize(&pwg)?;
    // p vanishes outside its hull, so the tails of pwg count in full
    let inside = l1_grid_window(&pwg, p, lo, hi, REPORT_GRID_POINTS);
    let achieved = inside + pwg.cdf(lo)? + pwg.sf(hi)?;
    let report = SynthesisReport {
        pieces: pwg.n_pieces(),
        layers: synth.stack.len(),
        achieved_l1: achieved,
        elided_identity_layers: synth.identity_layers,
    };
    Ok(Approximation1D { base: synth.base, stack: synth.stack, pwc, pwg, report })
}

#[cfg(test)]
mod tests;
