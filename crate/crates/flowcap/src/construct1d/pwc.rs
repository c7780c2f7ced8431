use crate::densities::{Gaussian1D, PiecewiseConstant1D, PiecewiseGaussian1D};
use crate::error::{Error, Result};
use crate::special::{norm_pdf, norm_quantile};
use std::f64::consts::PI;

pub const DEFAULT_PIECE_CAP: usize = 100_000;
/// σ of pieces standing in for zero-valued intervals, per unit width.
pub const ZERO_SIGMA_FACTOR: f64 = 1e6;
const COUNT_LIMIT: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwcToPwgOptions {
    pub piece_cap: usize,
    /// Subdivide intervals so the construction's error bound holds; with
    /// `false` every PWC interval becomes exactly one Gaussian piece whose
    /// mass on the interval equals the interval's (scaled) mass.
    pub subdivide: bool,
}

impl Default for PwcToPwgOptions {
    fn default() -> Self {
        PwcToPwgOptions { piece_cap: DEFAULT_PIECE_CAP, subdivide: true }
    }
}

/// Uniform piece width from the proof for a PWC of unit hull width:
/// ε / (3√(2π)·sup²·exp(Φ⁻¹(ε/3)² − ½)).
pub fn proof_delta(eps: f64, sup: f64) -> f64 {
    let c = norm_quantile(eps / 3.0);
    eps / (3.0 * (2.0 * PI).sqrt() * sup * sup * (c * c - 0.5).exp())
}

/// Per-tail mass: with ε/6 in each outer tail the total ℓ1 error is at most
/// 4·ε/6 from the tails plus ε/3 from the interior budget.
pub fn tail_mass(eps: f64) -> f64 {
    eps / 6.0
}

fn quantile_from(f_acc: f64) -> f64 {
    if f_acc < 0.5 {
        norm_quantile(f_acc)
    } else {
        -norm_quantile(1.0 - f_acc)
    }
}

/// Bound on |g'| for a Gaussian piece with density `a` at its left end and
/// standardized left end c: √(2π)·a²·exp(c² − ½).
fn slope_bound(a: f64, c: f64) -> f64 {
    (2.0 * PI).sqrt() * a * a * (c * c - 0.5).exp()
}

pub fn pwc_to_pwg(q: &PiecewiseConstant1D, eps: f64) -> Result<PiecewiseGaussian1D> {
    pwc_to_pwg_with(q, eps, PwcToPwgOptions::default())
}

/// Tail-consistent piecewise Gaussian within ℓ1 distance ε of `q`.
///
/// Each piece has density ᾱ = (1 − 2m)·α at its left end and CDF value equal
/// to the mass accumulated so far, which makes the result tail-consistent
/// by construction.
pub fn pwc_to_pwg_with(q: &PiecewiseConstant1D, eps: f64, opts: PwcToPwgOptions) -> Result<PiecewiseGaussian1D> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::contract(format!("eps must lie in (0,1), got {eps}")));
    }
    let m = tail_mass(eps);
    let scale = 1.0 - 2.0 * m;
    let bps = q.breakpoints();
    let vals: Vec<f64> = q.values().iter().map(|a| scale * a).collect();
    let (t_lo, t_hi) = q.hull();
    let width = t_hi - t_lo;
    // Σ ½δ²·L over pieces ≤ ε/6  ⇐  δ ≤ ε/(3·W·L) everywhere
    let delta_for = |a: f64, c: f64| eps / (3.0 * width * slope_bound(a, c));

    let mut cuts = vec![t_lo];
    let mut pieces = Vec::new();
    let c0 = norm_quantile(m);
    let s0 = if vals[0] > 0.0 { norm_pdf(c0) / vals[0] } else { ZERO_SIGMA_FACTOR * (bps[1] - bps[0]) };
    let left = Gaussian1D::new(t_lo - c0 * s0, s0)?;
    pieces.push(left);
    let mut f_acc = left.cdf_at(t_lo);
    let mut count = 1usize;

    for i in 0..vals.len() {
        let (a_i, b_i) = (bps[i], bps[i + 1]);
        let alpha = vals[i];
        let mut a = a_i;
        while a < b_i {
            let c = quantile_from(f_acc);
            let (sigma, b) = if alpha > 0.0 && !opts.subdivide {
                // Φ(c + w/σ) = F_acc + mass
                let c2 = quantile_from(f_acc + alpha * (b_i - a));
                (((b_i - a) / (c2 - c)).min(ZERO_SIGMA_FACTOR * (b_i - a)), b_i)
            } else if alpha > 0.0 {
                let sigma = norm_pdf(c) / alpha;
                let d = delta_for(alpha, c);
                let b = if a + d >= b_i {
                    b_i
                } else if a + 2.0 * d > b_i {
                    // split the remainder evenly instead of leaving a sliver
                    0.5 * (a + b_i)
                } else {
                    a + d
                };
                (sigma, b)
            } else {
                (ZERO_SIGMA_FACTOR * (b_i - a_i), b_i)
            };
            if !(b > a) {
                return Err(Error::NumericRange(format!("piece width underflow at {a}")));
            }
            count += 1;
            if count > opts.piece_cap {
                if count > COUNT_LIMIT {
                    return Err(Error::Capacity { required: count, cap: opts.piece_cap });
                }
                // keep walking to report the required count
                let g = Gaussian1D::new(a - c * sigma, sigma)?;
                f_acc += g.mass(a, b);
                a = b;
                continue;
            }
            let g = Gaussian1D::new(a - c * sigma, sigma)?;
            f_acc += g.mass(a, b);
            pieces.push(g);
            if b < t_hi {
                cuts.push(b);
            }
            a = b;
        }
    }
    count += 1;
    if count > opts.piece_cap {
        return Err(Error::Capacity { required: count, cap: opts.piece_cap });
    }
    let rem = 1.0 - f_acc;
    if !(rem > 0.0) {
        return Err(Error::NumericRange(format!("interior pieces overshoot the unit mass by {:e}", -rem)));
    }
    let c_plus = quantile_from(f_acc);
    let edge = pieces.last().unwrap().pdf(t_hi);
    let cap = ZERO_SIGMA_FACTOR * width;
    let s_plus = if edge > 0.0 { (norm_pdf(c_plus) / edge).min(cap) } else { cap };
    pieces.push(Gaussian1D::new(t_hi - c_plus * s_plus, s_plus)?);
    cuts.push(t_hi);
    PiecewiseGaussian1D::new(cuts, pieces)
}

/// ∫ |g − α| over [a, b], exact via the crossings of a Gaussian with a level.
fn abs_gap(g: &Gaussian1D, alpha: f64, a: f64, b: f64) -> f64 {
    let mut pts = vec![a];
    if alpha > 0.0 {
        let r = -2.0 * (alpha * g.sigma * (2.0 * PI).sqrt()).ln();
        if r > 0.0 {
            let h = g.sigma * r.sqrt();
            for x in [g.mu - h, g.mu + h] {
                if x > a && x < b {
                    pts.push(x);
                }
            }
        }
    }
    pts.push(b);
    pts.windows(2)
        .map(|w| (g.mass(w[0], w[1]) - alpha * (w[1] - w[0])).abs())
        .sum()
}

/// ‖q_pwg − q_pwc‖₁ when every interior breakpoint of `pwc` is a breakpoint
/// of `pwg` and the pwg hull matches (true for `pwc_to_pwg` outputs).
pub fn l1_pwg_pwc(pwg: &PiecewiseGaussian1D, pwc: &PiecewiseConstant1D) -> Result<f64> {
    let t = pwg.breakpoints();
    let n = pwg.n_pieces();
    let (lo, hi) = pwc.hull();
    if n < 3 || t[0] != lo || t[n - 2] != hi {
        return Err(Error::contract("pwg hull does not match the piecewise-constant hull"));
    }
    let mut total = pwg.piece_mass(0) + pwg.piece_mass(n - 1);
    for i in 1..n - 1 {
        let (a, b) = (t[i - 1], t[i]);
        let alpha = pwc.value_at(0.5 * (a + b));
        total += abs_gap(&pwg.pieces()[i], alpha, a, b);
    }
    Ok(total)
}
