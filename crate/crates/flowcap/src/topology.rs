//! Topology-matching residuals and Gaussian feasibility verdicts.

use crate::densities::{grad_log_density, Density, MixtureGaussianD, ScalarKernel};
use crate::error::{Error, Result};
use crate::flows::{FlowLayer, FlowStack, Radial, DEFAULT_EXCLUSION_MARGIN};
use crate::linalg::{dvec, norm, rank_abs, spd_eigen, spectral_norm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative cutoff for ranks and eigenvalue signs.
pub const RANK_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub z: Vec<f64>,
    /// None when the point was excluded.
    pub residual: Option<f64>,
    pub reason: Option<String>,
    /// |cos| between the residual combination and z − z0 (radial only).
    pub cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub points: Vec<ResidualPoint>,
    pub excluded: usize,
    pub max_residual: f64,
    /// The condition holds trivially (span covers ℝ^d).
    pub vacuous: bool,
}

impl ResidualReport {
    fn from_points(points: Vec<ResidualPoint>, vacuous: bool) -> Self {
        let excluded = points.iter().filter(|p| p.residual.is_none()).count();
        let max_residual = points.iter().filter_map(|p| p.residual).fold(0.0, f64::max);
        ResidualReport { points, excluded, max_residual, vacuous }
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.residual).collect()
    }

    /// Fraction of evaluated (non-excluded) points with residual ≤ tol.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        let r = self.residual_norms();
        if r.is_empty() {
            return 1.0;
        }
        r.iter().filter(|&&x| x <= tol).count() as f64 / r.len() as f64
    }
}

fn excluded(z: &[f64], reason: String) -> ResidualPoint {
    ResidualPoint { z: z.to_vec(), residual: None, reason: Some(reason), cosine: None }
}

fn evaluated(z: &[f64], r: f64) -> ResidualPoint {
    ResidualPoint { z: z.to_vec(), residual: Some(r), reason: None, cosine: None }
}

fn check_points(points: &[Vec<f64>], d: usize) -> Result<()> {
    match points.iter().find(|z| z.len() != d) {
        Some(z) => Err(Error::Dimension { expected: d, got: z.len() }),
        None => Ok(()),
    }
}

/// ‖J_f(z)ᵀ∇log p(f(z)) − ∇log q(z)‖ with p = f#q, for ReLU planar and
/// Sylvester stacks; points within `margin`·(1 + ‖x‖) of an activation
/// hyperplane along the trajectory are excluded.
pub fn residual_relu(stack: &FlowStack, q: &dyn Density, points: &[Vec<f64>], margin: f64) -> Result<ResidualReport> {
    if let Some(l) = stack.layers().iter().find(|l| !(l.is_relu() && matches!(l, FlowLayer::Planar(_) | FlowLayer::Sylvester(_)))) {
        return Err(Error::WrongFamily(format!("residual_relu takes ReLU planar/Sylvester layers, found {}", l.variant())));
    }
    check_points(points, q.dim())?;
    let out: Vec<ResidualPoint> = points
        .par_iter()
        .map(|z| -> Result<ResidualPoint> {
            let traj = stack.trajectory(z)?;
            for (t, (l, x)) in stack.layers().iter().zip(&traj).enumerate() {
                let band = margin * (1.0 + norm(x));
                if let Some(dist) = l.nonsmooth_distances(x).into_iter().find(|s| s.abs() < band) {
                    return Ok(excluded(z, format!("hyperplane proximity: layer {t}, distance {dist:e}")));
                }
            }
            let y = traj.last().unwrap();
            let gp = match stack.pushforward_grad_log_density_with_margin(q, y, margin) {
                Ok(g) => g,
                Err(Error::NonSmooth(msg)) => return Ok(excluded(z, msg)),
                Err(e) => return Err(e),
            };
            let j = stack.jacobian(z)?;
            let lhs = j.transpose() * dvec(&gp);
            let gq = dvec(&grad_log_density(q, z)?);
            Ok(evaluated(z, (lhs - gq).norm()))
        })
        .collect::<Result<_>>()?;
    Ok(ResidualReport::from_points(out, false))
}

/// Orthonormal basis of the span of the layers' tangent directions.
fn tangent_basis(stack: &FlowStack, d: usize) -> Result<(DMatrix<f64>, usize)> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut total_m = 0;
    for l in stack.layers() {
        match l {
            FlowLayer::Planar(p) => {
                total_m += 1;
                cols.push(dvec(p.w()));
            }
            FlowLayer::Sylvester(s) => {
                total_m += s.m();
                cols.extend(s.bmat().column_iter().map(|c| c.clone_owned()));
            }
            other => {
                return Err(Error::WrongFamily(format!("residual_span takes planar/Sylvester layers, found {}", other.variant())));
            }
        }
    }
    if cols.is_empty() {
        return Ok((DMatrix::zeros(d, 0), 0));
    }
    let b = DMatrix::from_columns(&cols);
    let svd = b.svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.unwrap();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_CUTOFF * smax).collect();
    let basis = DMatrix::from_columns(&keep.iter().map(|&i| u.column(i).clone_owned()).collect::<Vec<_>>());
    Ok((basis, total_m))
}

/// Norm of the part of ∇log p(f(z)) − ∇log q(z) orthogonal to
/// span{B₁..B_n} (tangent matrices; w for planar layers).
pub fn residual_span(stack: &FlowStack, q: &dyn Density, points: &[Vec<f64>]) -> Result<ResidualReport> {
    let d = q.dim();
    check_points(points, d)?;
    if let Some(l) = stack.layers().iter().find(|l| l.is_relu()) {
        return Err(Error::WrongFamily(format!("residual_span takes smooth layers, found ReLU {}", l.variant())));
    }
    let (basis, total_m) = tangent_basis(stack, d)?;
    let vacuous = total_m >= d;
    let out: Vec<ResidualPoint> = points
        .par_iter()
        .map(|z| -> Result<ResidualPoint> {
            let (y, _) = stack.forward(z)?;
            let diff = dvec(&stack.pushforward_grad_log_density(q, &y)?) - dvec(&grad_log_density(q, z)?);
            let perp = &diff - &basis * (basis.transpose() * &diff);
            Ok(evaluated(z, perp.norm()))
        })
        .collect::<Result<_>>()?;
    Ok(ResidualReport::from_points(out, vacuous))
}

/// Component of (1 + b/(a + r))·∇log p(f(z)) − ∇log q(z) orthogonal to
/// z − z0 for a single radial layer; points within the margin of z0 are
/// excluded.
pub fn residual_radial(layer: &Radial, q: &dyn Density, points: &[Vec<f64>], margin: f64) -> Result<ResidualReport> {
    let d = q.dim();
    check_points(points, d)?;
    let stack = FlowStack::new(vec![FlowLayer::Radial(layer.clone())])?;
    let out: Vec<ResidualPoint> = points
        .par_iter()
        .map(|z| -> Result<ResidualPoint> {
            let e: Vec<f64> = z.iter().zip(layer.z0()).map(|(a, b)| a - b).collect();
            let r = norm(&e);
            if r < margin * (1.0 + norm(z)) {
                return Ok(excluded(z, format!("seam proximity: ‖z − z0‖ = {r:e}")));
            }
            let (y, _) = stack.forward(z)?;
            let gp = stack.pushforward_grad_log_density_with_margin(q, &y, margin)?;
            let gq = grad_log_density(q, z)?;
            let k = 1.0 + layer.b() / (layer.a() + r);
            let v = DVector::from_iterator(d, gp.iter().zip(&gq).map(|(a, b)| k * a - b));
            let ev = dvec(&e) / r;
            let par = v.dot(&ev);
            let perp = (&v - &ev * par).norm();
            let vn = v.norm();
            let cosine = (vn > 0.0).then(|| par.abs() / vn);
            Ok(ResidualPoint { z: z.to_vec(), residual: Some(perp), reason: None, cosine })
        })
        .collect::<Result<_>>()?;
    Ok(ResidualReport::from_points(out, false))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MogConditionReport {
    pub points: Vec<Vec<f64>>,
    /// Mean of the condition matrix over the points.
    pub mean: Vec<Vec<f64>>,
    /// Max entrywise deviation of the condition matrix from its mean.
    pub max_deviation: f64,
}

/// Σ⁻¹·Σ_{i,j} π_iπ_j μ_i(μ_i − μ_j)ᵀ·Σ⁻¹ at x: the Jacobian of
/// Σ⁻¹·Σ_i π_i(x)μ_i, with π the responsibilities.
fn mog_term(m: &MixtureGaussianD, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let pi = m.responsibilities(x);
    let comps = m.components();
    let prec = comps[0].precision();
    let mut s = DMatrix::zeros(d, d);
    for (i, ci) in comps.iter().enumerate() {
        for (j, cj) in comps.iter().enumerate() {
            let w = pi[i] * pi[j];
            if w == 0.0 || i == j {
                continue;
            }
            s += w * ci.mean() * (ci.mean() - cj.mean()).transpose();
        }
    }
    prec * s * prec
}

/// Derivative in z of the right-hand side of the MoG matching condition
/// for a flow equal to Az + b on a region; it must be constant there.
/// Evaluated at `n` uniform points in the ball (center, radius).
pub fn mog_condition(
    p: &MixtureGaussianD,
    q: &MixtureGaussianD,
    a: &DMatrix<f64>,
    b: &[f64],
    center: &[f64],
    radius: f64,
    n: usize,
    seed: u64,
) -> Result<MogConditionReport> {
    let d = q.dim();
    if p.dim() != d || a.shape() != (d, d) || b.len() != d || center.len() != d {
        return Err(Error::Dimension { expected: d, got: p.dim() });
    }
    if !p.shared_covariance() || !q.shared_covariance() {
        return Err(Error::WrongForm("mixture components must share one covariance".into()));
    }
    if !(radius > 0.0) || n == 0 {
        return Err(Error::contract("mog_condition needs radius > 0 and n ≥ 1"));
    }
    if a.clone().lu().determinant().abs() == 0.0 {
        return Err(Error::Singular("A must be invertible".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let rad = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm(&g);
            g.iter().zip(center).map(|(x, c)| c + rad * x).collect()
        })
        .collect();
    let values: Vec<DMatrix<f64>> = points
        .iter()
        .map(|z| {
            let x = (a * dvec(z) + dvec(b)).as_slice().to_vec();
            a.transpose() * mog_term(p, &x) * a - mog_term(q, z)
        })
        .collect();
    let mean = values.iter().fold(DMatrix::zeros(d, d), |acc, v| acc + v) / n as f64;
    let max_deviation = values.iter().map(|v| (v - &mean).abs().max()).fold(0.0, f64::max);
    Ok(MogConditionReport { points, mean: crate::linalg::to_rows(&mean), max_deviation })
}

/// ‖r_q·∇̃log g(z) − r_p·Aᵀ∇̃log g(Az + b)‖ per point.
pub fn prod_condition(
    g: ScalarKernel,
    r_p: f64,
    r_q: f64,
    a: &DMatrix<f64>,
    b: &[f64],
    points: &[Vec<f64>],
) -> Result<ResidualReport> {
    let d = b.len();
    if a.shape() != (d, d) {
        return Err(Error::Dimension { expected: d, got: a.nrows() });
    }
    check_points(points, d)?;
    let out: Vec<ResidualPoint> = points
        .iter()
        .map(|z| -> Result<ResidualPoint> {
            let x = a * dvec(z) + dvec(b);
            let gz = DVector::from_vec(z.iter().map(|&t| g.dlog(t)).collect::<Result<Vec<_>>>()?);
            let gx = DVector::from_vec(x.iter().map(|&t| g.dlog(t)).collect::<Result<Vec<_>>>()?);
            Ok(evaluated(z, (r_q * gz - r_p * a.transpose() * gx).norm()))
        })
        .collect::<Result<_>>()?;
    Ok(ResidualReport::from_points(out, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PlanarSmooth,
    SylvesterSmooth,
    Radial,
    ReluSylvester,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar-smooth" | "planar" => Ok(Family::PlanarSmooth),
            "sylvester-smooth" | "sylvester" => Ok(Family::SylvesterSmooth),
            "radial" => Ok(Family::Radial),
            "relu-sylvester" => Ok(Family::ReluSylvester),
            _ => Err(Error::contract(format!("unknown flow family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    RuledOut,
    NotRuledOut,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub family: Family,
    pub m: Option<usize>,
    pub verdict: Verdict,
    pub witness: String,
}

/// Necessary conditions for a flow of the given family to carry
/// 𝒩(0, Σ_q) to 𝒩(0, Σ_p).
pub fn gaussian_feasibility(sigma_q: &DMatrix<f64>, sigma_p: &DMatrix<f64>, family: Family, m: Option<usize>) -> Result<FeasibilityVerdict> {
    if sigma_q.shape() != sigma_p.shape() {
        return Err(Error::Dimension { expected: sigma_q.nrows(), got: sigma_p.nrows() });
    }
    spd_eigen(sigma_q, "sigma_q")?;
    spd_eigen(sigma_p, "sigma_p")?;
    let d = sigma_q.nrows();
    let scale = spectral_norm(sigma_q).max(spectral_norm(sigma_p));
    let diff = sigma_q - sigma_p;
    let verdict = |ruled: bool, witness: String| FeasibilityVerdict {
        family,
        m,
        verdict: if ruled { Verdict::RuledOut } else { Verdict::NotRuledOut },
        witness,
    };
    Ok(match family {
        Family::PlanarSmooth => {
            let r = rank_abs(&diff, RANK_CUTOFF * scale);
            verdict(r > 1, format!("rank(Σ_q − Σ_p) = {r}"))
        }
        Family::Radial => {
            let dev = diff.abs().max();
            verdict(dev > RANK_CUTOFF * scale, format!("max|Σ_q − Σ_p| = {dev:e}"))
        }
        Family::SylvesterSmooth => {
            let m = m.ok_or_else(|| Error::contract("sylvester family needs the total flow dimension m"))?;
            if m == 0 || m >= d {
                return Err(Error::contract(format!("sylvester flow dimension must satisfy 0 < m < d = {d}, got {m}")));
            }
            let pq = sigma_q.clone().try_inverse().ok_or_else(|| Error::Singular("sigma_q".into()))?;
            let pp = sigma_p.clone().try_inverse().ok_or_else(|| Error::Singular("sigma_p".into()))?;
            let a = &pq - &pp;
            let tol = RANK_CUTOFF * spectral_norm(&pq).max(spectral_norm(&pp));
            let mut lam: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().cloned().collect();
            lam.sort_by(f64::total_cmp);
            // 1-based λ_{m+1} ≥ 0 and λ_{d−m} ≤ 0
            let low = lam[m];
            let high = lam[d - m - 1];
            let rank = lam.iter().filter(|l| l.abs() > tol).count();
            let ruled = low < -tol || high > tol || rank > 2 * m;
            verdict(ruled, format!("eigenvalues of Σ_q⁻¹ − Σ_p⁻¹ = {lam:?}; λ_(m+1) = {low:e}, λ_(d−m) = {high:e}, rank = {rank}"))
        }
        Family::ReluSylvester => verdict(
            false,
            "no necessary condition between centred Gaussians: a linear map carrying Σ_q to Σ_p exists and compiles to ReLU layers".into(),
        ),
    })
}

/// Residual points drawn from the base distribution.
pub fn default_points(q: &dyn Density, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    crate::densities::sample(q, seed, n)
}

pub fn default_margin() -> f64 {
    DEFAULT_EXCLUSION_MARGIN
}

#[cfg(test)]
mod tests;
