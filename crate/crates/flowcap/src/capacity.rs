//! Depth lower bounds from the per-layer progress bound
//! L̂(p, f) = ∫ | |det J_f(z)|·p(f(z)) − p(z) | dz: Monte Carlo and
//! closed-form evaluators, and dimension-scaling studies.

use crate::densities::{log_density, sample, Density, StudentT};
use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::linalg::spd_eigen;
use crate::special::{gl20, ln_gamma, ln_gamma_p, ln_gamma_q, loglog_slope};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Degrees of freedom of the default importance proposal.
pub const DEFAULT_PROPOSAL_DOF: f64 = 5.0;
/// Samples per independently seeded Monte Carlo chunk.
pub const MC_CHUNK: usize = 4096;
const PROPOSAL_PILOT: usize = 4000;
const PROPOSAL_INFLATE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub lhat_estimate: Option<Estimate>,
    pub lhat_bound: Option<f64>,
    pub l1_pq: f64,
    pub epsilon: f64,
    pub depth_lower_bound: f64,
}

impl CapacityReport {
    /// `eps` defaults to ½‖p − q‖₁. The denominator is the smallest
    /// available L̂ value.
    pub fn new(l1_pq: f64, eps: Option<f64>, lhat_estimate: Option<Estimate>, lhat_bound: Option<f64>) -> Result<Self> {
        if !(l1_pq >= 0.0) {
            return Err(Error::contract("‖p − q‖₁ must be nonnegative"));
        }
        let epsilon = eps.unwrap_or(0.5 * l1_pq);
        let denom = lhat_estimate
            .map(|e| e.value)
            .into_iter()
            .chain(lhat_bound)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
            .ok_or_else(|| Error::contract("capacity report needs an L̂ estimate or bound"))?;
        let depth_lower_bound = depth_lower_bound(l1_pq, epsilon, denom)?;
        Ok(CapacityReport { lhat_estimate, lhat_bound, l1_pq, epsilon, depth_lower_bound })
    }
}

/// max(0, (‖p − q‖₁ − ε)/L̂).
pub fn depth_lower_bound(l1_pq: f64, eps: f64, lhat_sup: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::contract("eps must be nonnegative"));
    }
    if !(lhat_sup > 0.0) {
        return Err(Error::Unbounded(format!("L̂ = {lhat_sup} gives no finite depth bound")));
    }
    Ok(((l1_pq - eps) / lhat_sup).max(0.0))
}

/// Isotropic Student-t whose scale covers both p and p∘f, fitted on a
/// pilot sample of p and its preimage under f.
pub fn default_proposal(p: &dyn Density, f: &FlowStack, seed: u64) -> Result<StudentT> {
    let d = p.dim();
    let mut pts = sample(p, seed ^ 0x5eed_c0de, PROPOSAL_PILOT)?;
    let pre: Vec<Vec<f64>> = pts.par_iter().filter_map(|x| f.inverse(x).ok()).collect();
    pts.extend(pre);
    let n = pts.len() as f64;
    let mut mean = vec![0.0; d];
    for x in &pts {
        for (m, xi) in mean.iter_mut().zip(x) {
            *m += xi / n;
        }
    }
    let mut sd: f64 = 0.0;
    for i in 0..d {
        let v = pts.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / n;
        sd = sd.max(v.sqrt());
    }
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::ProposalCoverage("pilot sample has no spread".into()));
    }
    StudentT::new(mean, PROPOSAL_INFLATE * sd, DEFAULT_PROPOSAL_DOF)
}

fn chunk_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 step keeps chunk streams decorrelated
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Importance-sampling estimate of L̂(p, f). Chunks are seeded
/// independently and merged in order, so results depend only on `seed`.
pub fn lhat_monte_carlo(
    p: &dyn Density,
    f: &FlowStack,
    proposal: Option<&dyn Density>,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::contract("lhat_monte_carlo needs n ≥ 2"));
    }
    if let Some(df) = f.dim() {
        crate::error::check_dim(p.dim(), df)?;
    }
    let owned;
    let r: &dyn Density = match proposal {
        Some(r) => r,
        None => {
            owned = default_proposal(p, f, seed)?;
            &owned
        }
    };
    crate::error::check_dim(p.dim(), r.dim())?;
    let chunks = n.div_ceil(MC_CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let m = MC_CHUNK.min(n - k * MC_CHUNK);
            let zs = sample(r, chunk_seed(seed, k as u64), m)?;
            let (mut s, mut s2) = (0.0, 0.0);
            for z in &zs {
                let w = weight(p, f, r, z)?;
                s += w;
                s2 += w * w;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(Estimate { value: mean, stderr: (var / nf).sqrt() })
}

fn weight(p: &dyn Density, f: &FlowStack, r: &dyn Density, z: &[f64]) -> Result<f64> {
    let (y, ld) = f.forward(z)?;
    let a = ld + log_density(p, &y)?;
    let b = log_density(p, z)?;
    let g = (a.exp() - b.exp()).abs();
    if g == 0.0 {
        return Ok(0.0);
    }
    let lr = log_density(r, z)?;
    let w = (a - lr).exp() - (b - lr).exp();
    if !w.is_finite() {
        return Err(Error::ProposalCoverage(format!("infinite importance weight at {z:?}")));
    }
    Ok(w.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HouseholderBound {
    /// (λmax/λmin)^{d/2} − 1
    pub ratio_form: f64,
    /// (λmax^{d/2} − λmin^{d/2})/√det Σ
    pub tight_form: f64,
}

/// Flow-independent bound on L̂(𝒩(0, Σ), f) over all Householder f.
pub fn householder_lhat_bound(cov: &DMatrix<f64>) -> Result<HouseholderBound> {
    let eig = spd_eigen(cov, "covariance")?;
    let ev = eig.eigenvalues.as_slice();
    let lmax = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = 0.5 * ev.len() as f64;
    let ln_det: f64 = ev.iter().map(|l| l.ln()).sum();
    let ratio_form = (h * (lmax / lmin).ln()).exp_m1();
    let hi = h * lmax.ln() - 0.5 * ln_det;
    let lo = h * lmin.ln() - 0.5 * ln_det;
    // e^hi − e^lo without cancellation
    let tight_form = hi.exp() * -(lo - hi).exp_m1();
    if !(ratio_form.is_finite() && tight_form.is_finite()) {
        return Err(Error::NumericRange("Householder bound overflows".into()));
    }
    Ok(HouseholderBound { ratio_form, tight_form })
}

/// The two pieces of the bound on ∫ p₁(z)/(1 + |w·z + b|) dz for
/// p₁ ∝ exp(−‖z‖^τ), evaluated at the symmetric optimum ‖w‖ = 1, b = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalPlanarTerms {
    /// P(‖z‖ ≤ d) = γ(d/τ, d^τ)/Γ(d/τ)
    pub term1: f64,
    /// (2/I_{d−1})·∫_d^∞ e^{−r^τ} r^{d−2} log(1+r) dr / ∫_0^∞ e^{−r^τ} r^{d−1} dr,
    /// with I_k = ∫_0^π sin^{k−1}θ dθ.
    pub term2: f64,
}

fn check_local(d: usize, tau: f64) -> Result<()> {
    if d <= 2 {
        return Err(Error::contract(format!("local planar bounds need d > 2, got {d}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::contract(format!("tau must lie in (0,1), got {tau}")));
    }
    Ok(())
}

fn ln1p_exp(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp()
    } else {
        t.exp().ln_1p()
    }
}

/// E[log(1 + S^{1/τ}); S > x0] for S ∼ Gamma(a, 1), by Gauss–Legendre
/// panels over the bulk of the Gamma density.
fn gamma_tail_log_moment(a: f64, x0: f64, tau: f64) -> f64 {
    let sd = a.sqrt();
    let lo = x0.max(a - 40.0 * sd).max(0.0);
    let hi = (a + 40.0 * sd + 60.0).max(lo + 1.0);
    let lg = ln_gamma(a);
    gl20().integrate_panels(lo, hi, 400, |s| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_s = s.ln();
        (-s + (a - 1.0) * ln_s - lg).exp() * ln1p_exp(ln_s / tau)
    })
}

/// ln I_{d−1} = ln ∫_0^π sin^{d−2}θ dθ.
fn ln_sine_integral(d: usize) -> f64 {
    let df = d as f64;
    0.5 * PI.ln() + ln_gamma(0.5 * (df - 1.0)) - ln_gamma(0.5 * df)
}

pub fn local_planar_terms(d: usize, tau: f64) -> Result<LocalPlanarTerms> {
    check_local(d, tau)?;
    let df = d as f64;
    let term1 = ln_gamma_p(df / tau, df.powf(tau)).exp();
    let a = (df - 1.0) / tau;
    let moment = gamma_tail_log_moment(a, df.powf(tau), tau);
    let ln_t2 = std::f64::consts::LN_2 - ln_sine_integral(d) + ln_gamma(a) - ln_gamma(df / tau) + moment.ln();
    let term2 = ln_t2.exp();
    if !(term1.is_finite() && term2.is_finite()) {
        return Err(Error::NumericRange(format!("local planar terms overflow at d={d}, tau={tau}")));
    }
    Ok(LocalPlanarTerms { term1, term2 })
}

/// Z₁/Z₂ ≥ 1, the factor with p₂ ≤ (Z₁/Z₂)·p₁ pointwise, where Z₁, Z₂ are
/// the radial normalizers of the pure and flat-core densities.
pub fn flat_core_ratio(d: usize, tau: f64) -> Result<f64> {
    check_local(d, tau)?;
    let df = d as f64;
    let a = df / tau;
    let outer = ln_gamma_q(a, df).exp();
    let core = (tau.ln() - df + (a - 1.0) * df.ln() - ln_gamma(a)).exp();
    Ok(1.0 / (outer + core))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalPlanarBound {
    pub d: usize,
    pub tau: f64,
    pub c_h: f64,
    pub terms: LocalPlanarTerms,
    pub flat_core_ratio: f64,
    /// c_h·(Z₁/Z₂)·(term1 + term2)
    pub smooth_part: f64,
    /// (1 + c_h)·c_h·τ·d^{−(1/τ−1)}
    pub shift_part: f64,
    pub lhat: f64,
}

/// Bound on L̂(p₂, f) uniform over c_h-local planar f, for the flat-core
/// density p₂.
pub fn local_planar_lhat_bound(d: usize, tau: f64, c_h: f64) -> Result<LocalPlanarBound> {
    if !(c_h >= 0.0) {
        return Err(Error::contract("c_h must be nonnegative"));
    }
    let terms = local_planar_terms(d, tau)?;
    let ratio = flat_core_ratio(d, tau)?;
    let smooth_part = c_h * ratio * (terms.term1 + terms.term2);
    let shift_part = (1.0 + c_h) * c_h * tau * (d as f64).powf(-(1.0 / tau - 1.0));
    Ok(LocalPlanarBound { d, tau, c_h, terms, flat_core_ratio: ratio, smooth_part, shift_part, lhat: smooth_part + shift_part })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalingFamily {
    /// 𝒩(0, I + S) with S = d^{−(2+κ)}·(all-ones).
    Householder { kappa: f64 },
    LocalPlanar { tau: f64, c_h: f64 },
    /// Fixed L̂, independent of d.
    Constant { lhat: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingParams {
    pub l1_pq: f64,
    /// Defaults to ½·l1_pq.
    pub eps: Option<f64>,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams { l1_pq: 2.0, eps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub d: usize,
    pub lhat_bound: f64,
    pub depth_lb: f64,
    pub slope_estimate: f64,
    /// Components of the bound where the family has more than one
    /// (local planar: the smooth and shift parts).
    pub branches: Vec<(String, f64)>,
}

/// The perturbed covariance used by the Householder study.
pub fn householder_study_cov(d: usize, kappa: f64) -> DMatrix<f64> {
    let s = (d as f64).powf(-(2.0 + kappa));
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 + s } else { s })
}

fn family_lhat(family: &ScalingFamily, d: usize) -> Result<(f64, Vec<(String, f64)>)> {
    match *family {
        ScalingFamily::Householder { kappa } => {
            if !(kappa > 0.0) {
                return Err(Error::contract("kappa must be positive"));
            }
            let b = householder_lhat_bound(&householder_study_cov(d, kappa))?;
            Ok((b.tight_form.min(b.ratio_form), vec![("ratio_form".into(), b.ratio_form), ("tight_form".into(), b.tight_form)]))
        }
        ScalingFamily::LocalPlanar { tau, c_h } => {
            let b = local_planar_lhat_bound(d, tau, c_h)?;
            Ok((b.lhat, vec![("smooth_part".into(), b.smooth_part), ("shift_part".into(), b.shift_part)]))
        }
        ScalingFamily::Constant { lhat } => Ok((lhat, Vec::new())),
    }
}

/// Depth lower bound per dimension and the least-squares log-log slope
/// of depth against d.
pub fn scaling_study(family: &ScalingFamily, dims: &[usize], params: &ScalingParams) -> Result<Vec<ScalingRow>> {
    if dims.len() < 3 {
        return Err(Error::contract("scaling study needs at least 3 dimensions"));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("dims must be strictly ascending"));
    }
    let eps = params.eps.unwrap_or(0.5 * params.l1_pq);
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let (lhat, branches) = family_lhat(family, d)?;
        let depth_lb = depth_lower_bound(params.l1_pq, eps, lhat)?;
        rows.push(ScalingRow { d, lhat_bound: lhat, depth_lb, slope_estimate: f64::NAN, branches });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.depth_lb).collect();
    let slope = if ys.iter().all(|&y| y > 0.0) { loglog_slope(&xs, &ys) } else { 0.0 };
    for r in &mut rows {
        r.slope_estimate = slope;
    }
    Ok(rows)
}
