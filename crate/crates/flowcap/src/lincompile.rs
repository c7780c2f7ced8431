//! Compiling linear and affine maps into ReLU planar + Householder stacks.
//!
//! A = Q·(L·D)·V with L unit lower, D the pivots, V unit upper and Q a signed
//! permutation. L·D splits into d column factors, V into d − 1; the last
//! factor of each merges into one rank-one update, leaving 2d − 2 rank-one
//! factors, each realized by two ReLU planar layers. Q is a product of
//! reflections.

use crate::error::{Error, Result};
use crate::flows::{FlowLayer, FlowStack, Householder, Nonlinearity, Planar, GUARD_SLACK};
use crate::linalg::spd_eigen;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Relative pivot size below which LU without pivoting is abandoned.
pub const PIVOT_TOL: f64 = 1e-10;
/// Relative |det| below which A is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LinearCompileResult {
    pub stack: FlowStack,
    pub planar_count: usize,
    pub householder_count: usize,
    /// Affine part, added after the stack.
    pub shift: Vec<f64>,
    /// The linear map the stack realizes.
    pub matrix: DMatrix<f64>,
    /// LUP path taken (row exchanges were needed).
    pub pivoted: bool,
    /// Signed permutation realized by the Householder layers.
    pub orthogonal: DMatrix<f64>,
    /// Cancelling reflection pairs appended to reach d reflections.
    pub padding_pairs: usize,
    /// det Q ≠ (−1)^d: no product of exactly d reflections equals Q.
    pub parity_limited: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileReport {
    pub dim: usize,
    pub planar_count: usize,
    pub householder_count: usize,
    pub pivoted: bool,
    pub padding_pairs: usize,
    pub parity_limited: bool,
}

impl LinearCompileResult {
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (y, _) = self.stack.forward(z)?;
        Ok(y.iter().zip(&self.shift).map(|(a, b)| a + b).collect())
    }

    /// Product of the emitted reflections, in application order.
    pub fn householder_product(&self) -> DMatrix<f64> {
        let d = self.matrix.nrows();
        let mut m = DMatrix::<f64>::identity(d, d);
        for l in self.stack.layers() {
            if let FlowLayer::Householder(h) = l {
                let v = DVector::from_column_slice(h.v());
                m = (DMatrix::<f64>::identity(d, d) - 2.0 * &v * v.transpose() / v.norm_squared()) * m;
            }
        }
        m
    }

    pub fn report(&self) -> CompileReport {
        CompileReport {
            dim: self.matrix.nrows(),
            planar_count: self.planar_count,
            householder_count: self.householder_count,
            pivoted: self.pivoted,
            padding_pairs: self.padding_pairs,
            parity_limited: self.parity_limited,
        }
    }
}

/// (I + u·wᵀ) as z + u·relu(wᵀz) followed by z − u·relu(−wᵀz).
pub fn rank_one_gadget(u: &[f64], w: &[f64]) -> Result<FlowStack> {
    if u.len() != w.len() || u.is_empty() {
        return Err(Error::Dimension { expected: u.len(), got: w.len() });
    }
    let s = 1.0 + u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    if !(s > GUARD_SLACK) {
        return Err(Error::hypothesis(format!("rank-one update needs 1 + uᵀw > 0, got {s}")));
    }
    let neg_u: Vec<f64> = u.iter().map(|x| -x).collect();
    let neg_w: Vec<f64> = w.iter().map(|x| -x).collect();
    FlowStack::new(vec![
        Planar::new(u.to_vec(), w.to_vec(), 0.0, Nonlinearity::Relu)?.into(),
        Planar::new(neg_u, neg_w, 0.0, Nonlinearity::Relu)?.into(),
    ])
}

fn scale_of(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Doolittle LU without pivoting; None when a pivot is too small.
fn lu_no_pivot(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let d = a.nrows();
    let tol = PIVOT_TOL * scale_of(a);
    let mut u = a.clone();
    let mut l = DMatrix::<f64>::identity(d, d);
    for k in 0..d {
        let p = u[(k, k)];
        if !(p.abs() > tol) {
            return None;
        }
        for i in k + 1..d {
            let f = u[(i, k)] / p;
            l[(i, k)] = f;
            for j in k..d {
                u[(i, j)] -= f * u[(k, j)];
            }
            u[(i, k)] = 0.0;
        }
    }
    Some((l, u))
}

/// Unit reflection vectors v₁..v_k with Q = H(v₁)···H(v_k), k ≤ d, built by
/// mapping Q's columns onto the basis one at a time.
pub fn reflections_for(q: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let d = q.nrows();
    if q.ncols() != d {
        return Err(Error::Dimension { expected: d, got: q.ncols() });
    }
    let defect = (q.transpose() * q - DMatrix::<f64>::identity(d, d)).abs().max();
    if defect > 1e-10 {
        return Err(Error::contract(format!("matrix is not orthogonal (‖QᵀQ − I‖ = {defect:e})")));
    }
    let mut m = q.clone();
    let mut vs = Vec::new();
    for k in 0..d {
        let mut v = m.column(k).clone_owned();
        v[k] -= 1.0;
        if v.norm() > 1e-12 {
            let h = DMatrix::<f64>::identity(d, d) - 2.0 * &v * v.transpose() / v.norm_squared();
            m = h * m;
            vs.push((v.normalize()).as_slice().to_vec());
        }
    }
    // H_k···H_1·Q = I, so Q = H_1···H_k
    Ok(vs)
}

/// Rank-one factors (u, w) in application order, and the signed
/// permutation Q, with A = Q·(product of factors).
struct Factorization {
    factors: Vec<(Vec<f64>, Vec<f64>)>,
    q: DMatrix<f64>,
    pivoted: bool,
}

fn factorize(a: &DMatrix<f64>) -> Result<Factorization> {
    let d = a.nrows();
    let scale = scale_of(a);
    let lup = a.clone().lu();
    let det = lup.determinant();
    if !(det.abs() > SINGULAR_TOL * scale.powi(d as i32)) || !det.is_finite() {
        return Err(Error::Singular(format!("|det A| = {:e} at scale {scale:e}", det.abs())));
    }
    let (l, u, perm, pivoted) = match lu_no_pivot(a) {
        Some((l, u)) => (l, u, DMatrix::<f64>::identity(d, d), false),
        None => {
            let mut p = DMatrix::<f64>::identity(d, d);
            lup.p().permute_rows(&mut p);
            // P·A = L·U  ⇒  A = Pᵀ·L·U
            (lup.l(), lup.u(), p.transpose(), true)
        }
    };
    // negative pivots go to the orthogonal part: L·D = S·(S·L·S)·(S·D)
    let signs: Vec<f64> = (0..d).map(|k| if u[(k, k)] < 0.0 { -1.0 } else { 1.0 }).collect();
    let s = DMatrix::from_diagonal(&DVector::from_vec(signs.clone()));
    let l = &s * l * &s;
    let dg: Vec<f64> = (0..d).map(|k| u[(k, k)].abs()).collect();
    let v = DMatrix::from_fn(d, d, |i, j| u[(i, j)] / u[(i, i)]);
    let q = perm * s;

    let e = |k: usize| -> Vec<f64> { (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    let mut factors = Vec::new();
    // V = V_{d−1}···V_1, applied first; V_{d−1} is merged below
    for k in 1..d.saturating_sub(1) {
        let uk: Vec<f64> = (0..d).map(|i| if i < k { v[(i, k)] } else { 0.0 }).collect();
        factors.push((uk, e(k)));
    }
    // G_{d−1}·V_{d−1} = I + [v_{d−1} + (D_{d−1} − 1)e_{d−1}]e_{d−1}ᵀ
    let last = d - 1;
    let um: Vec<f64> = (0..d).map(|i| if i < last { v[(i, last)] } else { dg[last] - 1.0 }).collect();
    factors.push((um, e(last)));
    // L·D = G_0···G_{d−1}
    for k in (0..last).rev() {
        let uk: Vec<f64> = (0..d)
            .map(|i| match i.cmp(&k) {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => dg[k] - 1.0,
                std::cmp::Ordering::Greater => l[(i, k)] * dg[k],
            })
            .collect();
        factors.push((uk, e(k)));
    }
    factors.retain(|(u, _)| u.iter().any(|&x| x != 0.0));
    Ok(Factorization { factors, q, pivoted })
}

/// Stack realizing z ↦ A·z: 4d − 4 ReLU planar layers (fewer when factors
/// vanish) and, when A needs a sign or permutation, Householder layers,
/// padded with cancelling pairs up to d when the parity of det A allows.
pub fn compile_linear(a: &DMatrix<f64>) -> Result<LinearCompileResult> {
    compile_affine(a, None)
}

pub fn compile_affine(a: &DMatrix<f64>, shift: Option<&[f64]>) -> Result<LinearCompileResult> {
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return Err(Error::Dimension { expected: d, got: a.ncols() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract("matrix has non-finite entries"));
    }
    let shift = match shift {
        Some(c) if c.len() != d => return Err(Error::Dimension { expected: d, got: c.len() }),
        Some(c) => c.to_vec(),
        None => vec![0.0; d],
    };
    let f = factorize(a)?;
    let mut layers: Vec<FlowLayer> = Vec::new();
    for (u, w) in &f.factors {
        layers.extend(rank_one_gadget(u, w)?.layers().iter().cloned());
    }
    let planar_count = layers.len();
    let mut vs = reflections_for(&f.q)?;
    let minimal = vs.len();
    let mut padding_pairs = 0;
    let mut parity_limited = false;
    if minimal > 0 {
        let mut pad = e_first(d);
        while vs.len() + 2 <= d {
            vs.push(pad.clone());
            vs.push(pad.clone());
            padding_pairs += 1;
            pad.rotate_right(1);
        }
        parity_limited = vs.len() != d;
    }
    // Q = H_1···H_k: H_k acts first
    for v in vs.iter().rev() {
        layers.push(Householder::new(v.clone())?.into());
    }
    Ok(LinearCompileResult {
        stack: FlowStack::new(layers)?,
        planar_count,
        householder_count: vs.len(),
        shift,
        matrix: a.clone(),
        pivoted: f.pivoted,
        orthogonal: f.q,
        padding_pairs,
        parity_limited,
    })
}

fn e_first(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    v
}

/// f = V_p·Λ_p^{1/2}·Λ_q^{−1/2}·V_qᵀ, which takes 𝒩(0, Σ_q) to 𝒩(0, Σ_p).
pub fn bridge_matrix(sigma_q: &DMatrix<f64>, sigma_p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma_q.shape() != sigma_p.shape() {
        return Err(Error::Dimension { expected: sigma_q.nrows(), got: sigma_p.nrows() });
    }
    let eq = spd_eigen(sigma_q, "sigma_q")?;
    let ep = spd_eigen(sigma_p, "sigma_p")?;
    if sigma_q == sigma_p {
        let d = sigma_q.nrows();
        return Ok(DMatrix::identity(d, d));
    }
    let dq = DMatrix::from_diagonal(&eq.eigenvalues.map(|x| 1.0 / x.sqrt()));
    let dp = DMatrix::from_diagonal(&ep.eigenvalues.map(f64::sqrt));
    Ok(&ep.eigenvectors * dp * dq * eq.eigenvectors.transpose())
}

pub fn gaussian_bridge(sigma_q: &DMatrix<f64>, sigma_p: &DMatrix<f64>) -> Result<LinearCompileResult> {
    compile_linear(&bridge_matrix(sigma_q, sigma_p)?)
}
