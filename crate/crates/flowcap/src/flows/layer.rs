use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::linalg::{dot, dvec, norm};
use crate::special::monotone_root;
use nalgebra::{DMatrix, DVector};

/// Slack in the invertibility guards: det factors must exceed this.
pub const GUARD_SLACK: f64 = 1e-9;
/// Default half-width of the band around activation hyperplanes (and the
/// radial centre) treated as non-smooth, relative to 1 + ‖z‖.
pub const DEFAULT_EXCLUSION_MARGIN: f64 = 1e-8;
const MAX_NEWTON: usize = 100;
/// Largest m for which the Sylvester guard enumerates all 2^m corners.
const MAX_GUARD_M: usize = 20;

fn invertibility(detail: String) -> Error {
    Error::Invertibility { layer: 0, detail }
}

/// z + u·h(wᵀz + b)
#[derive(Debug, Clone, PartialEq)]
pub struct Planar {
    u: Vec<f64>,
    w: Vec<f64>,
    b: f64,
    h: Nonlinearity,
}

/// z + A·h(Bᵀz + b), A and B of shape d×m, b ∈ ℝ^m
#[derive(Debug, Clone, PartialEq)]
pub struct Sylvester {
    a: DMatrix<f64>,
    bm: DMatrix<f64>,
    b: Vec<f64>,
    h: Nonlinearity,
    // BᵀA, m×m
    k: DMatrix<f64>,
}

/// z + β(r)(z − z0), β(r) = b/(a + r), r = ‖z − z0‖
#[derive(Debug, Clone, PartialEq)]
pub struct Radial {
    a: f64,
    b: f64,
    z0: Vec<f64>,
}

/// z − 2v(vᵀz), ‖v‖ = 1
#[derive(Debug, Clone, PartialEq)]
pub struct Householder {
    v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowLayer {
    Planar(Planar),
    Sylvester(Sylvester),
    Radial(Radial),
    Householder(Householder),
}

impl Planar {
    pub fn new(u: Vec<f64>, w: Vec<f64>, b: f64, h: Nonlinearity) -> Result<Self> {
        if u.len() != w.len() || u.is_empty() {
            return Err(Error::Dimension { expected: u.len(), got: w.len() });
        }
        if !(b.is_finite() && u.iter().chain(&w).all(|x| x.is_finite())) {
            return Err(Error::contract("planar parameters must be finite"));
        }
        let uw = dot(&u, &w);
        let (lo, hi) = h.dh_range();
        let worst = (uw * lo).min(uw * hi);
        if worst <= -1.0 + GUARD_SLACK {
            return Err(invertibility(format!(
                "planar guard fails: uᵀw·h' reaches {worst} ≤ −1 (uᵀw = {uw}, h = {})",
                h.name()
            )));
        }
        Ok(Planar { u, w, b, h })
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn w(&self) -> &[f64] {
        &self.w
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn h(&self) -> &Nonlinearity {
        &self.h
    }
    fn pre(&self, z: &[f64]) -> f64 {
        dot(&self.w, z) + self.b
    }
    fn det(&self, s: f64) -> f64 {
        1.0 + dot(&self.u, &self.w) * self.h.dh(s)
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        // s = wᵀz + b solves s + uᵀw·h(s) = wᵀy + b, monotone in s.
        let c = self.pre(y);
        let k = dot(&self.u, &self.w);
        let s = if self.h.is_relu() {
            if c < 0.0 {
                c
            } else {
                c / (1.0 + k)
            }
        } else if k == 0.0 {
            c
        } else {
            let g = |s: f64| (s + k * self.h.h(s) - c, 1.0 + k * self.h.dh(s));
            let mut r = 1.0 + k.abs() * self.h.h_bound().unwrap_or(1.0 + c.abs());
            let mut it = 0;
            while !(g(c - r).0 <= 0.0 && g(c + r).0 >= 0.0) {
                r *= 2.0;
                it += 1;
                if it > 200 {
                    return Err(Error::NumericInversion { layer: 0, iterations: it });
                }
            }
            monotone_root(g, c - r, c + r, 1e-16, 400)
                .ok_or(Error::NumericInversion { layer: 0, iterations: 400 })?
        };
        let hs = self.h.h(s);
        Ok(y.iter().zip(&self.u).map(|(yi, ui)| yi - ui * hs).collect())
    }
}

impl Sylvester {
    /// `a` and `bm` are d×m with m < d; `b` has length m.
    pub fn new(a: DMatrix<f64>, bm: DMatrix<f64>, b: Vec<f64>, h: Nonlinearity) -> Result<Self> {
        let (d, m) = a.shape();
        if bm.shape() != (d, m) {
            return Err(Error::contract(format!("A is {d}×{m} but B is {:?}", bm.shape())));
        }
        if m == 0 || m >= d {
            return Err(Error::contract(format!("Sylvester flow needs 0 < m < d, got m={m}, d={d}")));
        }
        if b.len() != m {
            return Err(Error::Dimension { expected: m, got: b.len() });
        }
        if !(a.iter().chain(bm.iter()).chain(&b).all(|x| x.is_finite())) {
            return Err(Error::contract("Sylvester parameters must be finite"));
        }
        if m > MAX_GUARD_M {
            return Err(Error::Unsupported(format!("Sylvester invertibility guard for m = {m} > {MAX_GUARD_M}")));
        }
        let k = bm.transpose() * &a;
        // det(I + D·K) is multi-affine in D, so positivity on the corners of
        // the h' box (which contains 0) makes I + D·K a P-matrix everywhere.
        let (lo, hi) = h.dh_range();
        let (lo, hi) = (lo.min(0.0), hi.max(0.0));
        for mask in 0u64..(1u64 << m) {
            let mut mat = DMatrix::<f64>::identity(m, m);
            for j in 0..m {
                let dj = if mask >> j & 1 == 1 { hi } else { lo };
                for i in 0..m {
                    mat[(j, i)] += dj * k[(j, i)];
                }
            }
            let det = mat.determinant();
            if det <= GUARD_SLACK {
                return Err(invertibility(format!(
                    "Sylvester guard fails: det(I + D·BᵀA) = {det} at corner {mask:b}"
                )));
            }
        }
        Ok(Sylvester { a, bm, b, h, k })
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn bmat(&self) -> &DMatrix<f64> {
        &self.bm
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn h(&self) -> &Nonlinearity {
        &self.h
    }
    pub fn m(&self) -> usize {
        self.b.len()
    }
    fn pre(&self, z: &[f64]) -> DVector<f64> {
        self.bm.tr_mul(&dvec(z)) + dvec(&self.b)
    }
    fn inner(&self, s: &DVector<f64>) -> DMatrix<f64> {
        // I + D·K
        let m = self.m();
        let mut mat = DMatrix::<f64>::identity(m, m);
        for j in 0..m {
            let dj = self.h.dh(s[j]);
            for i in 0..m {
                mat[(j, i)] += dj * self.k[(j, i)];
            }
        }
        mat
    }

    fn solve_reduced(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        // t + K·h(t) = c
        let m = self.m();
        let g = |t: &DVector<f64>| t + &self.k * t.map(|x| self.h.h(x)) - c;
        let tol = 1e-14 * (1.0 + c.amax());
        let mut t = c.clone();
        let mut r = g(&t);
        for _ in 0..MAX_NEWTON {
            if r.amax() <= tol {
                return Ok(t);
            }
            let mut jac = DMatrix::<f64>::identity(m, m);
            for j in 0..m {
                let dj = self.h.dh(t[j]);
                for i in 0..m {
                    jac[(i, j)] += self.k[(i, j)] * dj;
                }
            }
            let step = jac.lu().solve(&r).ok_or_else(|| Error::Singular("Sylvester Newton Jacobian".into()))?;
            let n0 = r.norm();
            let mut lam = 1.0;
            loop {
                let cand = &t - lam * &step;
                let rc = g(&cand);
                if rc.norm() < (1.0 - 1e-4 * lam) * n0 || lam < 1e-10 {
                    t = cand;
                    r = rc;
                    break;
                }
                lam *= 0.5;
            }
        }
        if r.amax() <= tol * 1e3 {
            return Ok(t);
        }
        if self.h.is_relu() {
            return self.solve_relu_patterns(c);
        }
        Err(Error::NumericInversion { layer: 0, iterations: MAX_NEWTON })
    }

    fn solve_relu_patterns(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.m();
        for mask in 0u64..(1u64 << m) {
            let mut mat = DMatrix::<f64>::identity(m, m);
            for j in 0..m {
                if mask >> j & 1 == 1 {
                    for i in 0..m {
                        mat[(i, j)] += self.k[(i, j)];
                    }
                }
            }
            if let Some(t) = mat.lu().solve(c) {
                if (0..m).all(|j| (t[j] >= 0.0) == (mask >> j & 1 == 1)) {
                    return Ok(t);
                }
            }
        }
        Err(Error::NumericInversion { layer: 0, iterations: 1 << m })
    }
}

impl Radial {
    pub fn new(a: f64, b: f64, z0: Vec<f64>) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::contract(format!("radial flow needs a > 0, got {a}")));
        }
        if z0.is_empty() || !b.is_finite() || z0.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("radial parameters must be finite"));
        }
        if !(1.0 + b / a > GUARD_SLACK) {
            return Err(invertibility(format!("radial guard fails: 1 + b/a = {} ≤ 0", 1.0 + b / a)));
        }
        Ok(Radial { a, b, z0 })
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn z0(&self) -> &[f64] {
        &self.z0
    }
    fn offset(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let e: Vec<f64> = z.iter().zip(&self.z0).map(|(x, c)| x - c).collect();
        let r = norm(&e);
        (e, r)
    }
    /// Radial eigenvalue 1 + ab/(a+r)² and tangential one 1 + b/(a+r).
    fn eig(&self, r: f64) -> (f64, f64) {
        let ar = self.a + r;
        (1.0 + self.a * self.b / (ar * ar), 1.0 + self.b / ar)
    }
    fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let (e, rho) = self.offset(y);
        if rho == 0.0 {
            return y.to_vec();
        }
        // r² + (a + b − ρ)r − aρ = 0, positive root, cancellation-free.
        let p = self.a + self.b - rho;
        let disc = (p * p + 4.0 * rho * self.a).sqrt();
        let r = if p <= 0.0 { 0.5 * (disc - p) } else { 2.0 * rho * self.a / (disc + p) };
        let k = r / rho;
        e.iter().zip(&self.z0).map(|(ei, c)| c + k * ei).collect()
    }
}

impl Householder {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if v.is_empty() || (n - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("Householder v must be a unit vector, ‖v‖ = {n}")));
        }
        Ok(Householder { v })
    }
    /// Normalizes v first; errors on v = 0.
    pub fn from_direction(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::contract("Householder direction must be nonzero"));
        }
        Householder::new(v.iter().map(|x| x / n).collect())
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let c = 2.0 * dot(&self.v, z);
        z.iter().zip(&self.v).map(|(zi, vi)| zi - c * vi).collect()
    }
}

impl FlowLayer {
    pub fn dim(&self) -> usize {
        match self {
            FlowLayer::Planar(p) => p.u.len(),
            FlowLayer::Sylvester(s) => s.a.nrows(),
            FlowLayer::Radial(r) => r.z0.len(),
            FlowLayer::Householder(h) => h.v.len(),
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            FlowLayer::Planar(_) => "planar",
            FlowLayer::Sylvester(_) => "sylvester",
            FlowLayer::Radial(_) => "radial",
            FlowLayer::Householder(_) => "householder",
        }
    }

    pub fn nonlinearity(&self) -> Option<&Nonlinearity> {
        match self {
            FlowLayer::Planar(p) => Some(&p.h),
            FlowLayer::Sylvester(s) => Some(&s.h),
            _ => None,
        }
    }

    /// Planar or Sylvester with ReLU activation.
    pub fn is_relu(&self) -> bool {
        self.nonlinearity().is_some_and(|h| h.is_relu())
    }

    /// f(z) and the determinant of J_f(z) (signed; −1 for Householder).
    pub fn forward_det(&self, z: &[f64]) -> (Vec<f64>, f64) {
        match self {
            FlowLayer::Planar(p) => {
                let s = p.pre(z);
                let hs = p.h.h(s);
                (z.iter().zip(&p.u).map(|(zi, ui)| zi + ui * hs).collect(), p.det(s))
            }
            FlowLayer::Sylvester(sy) => {
                let s = sy.pre(z);
                let hs = s.map(|x| sy.h.h(x));
                let y = dvec(z) + &sy.a * hs;
                (y.iter().cloned().collect(), sy.inner(&s).determinant())
            }
            FlowLayer::Radial(r) => {
                let (e, rr) = r.offset(z);
                let beta = r.b / (r.a + rr);
                let (lr, lt) = r.eig(rr);
                let det = lr * lt.powi(z.len() as i32 - 1);
                (z.iter().zip(&e).map(|(zi, ei)| zi + beta * ei).collect(), det)
            }
            FlowLayer::Householder(h) => (h.apply(z), -1.0),
        }
    }

    /// f(z) and log|det J_f(z)|; errors if the det factor is not positive.
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if let FlowLayer::Radial(r) = self {
            // log form avoids overflow of the (d−1)-th power in high d
            let (y, _) = self.forward_det(z);
            let (_, rr) = r.offset(z);
            let (lr, lt) = r.eig(rr);
            if !(lr > 0.0 && lt > 0.0) {
                return Err(invertibility(format!("radial det factors {lr}, {lt}")));
            }
            return Ok((y, lr.ln() + (z.len() as f64 - 1.0) * lt.ln()));
        }
        let (y, det) = self.forward_det(z);
        if matches!(self, FlowLayer::Householder(_)) {
            return Ok((y, 0.0));
        }
        if !(det > 0.0) {
            return Err(invertibility(format!("{} det factor {det} ≤ 0", self.variant())));
        }
        Ok((y, det.ln()))
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            FlowLayer::Planar(p) => p.inverse(y),
            FlowLayer::Sylvester(s) => {
                let c = s.pre(y);
                let t = s.solve_reduced(&c)?;
                let z = dvec(y) - &s.a * t.map(|x| s.h.h(x));
                Ok(z.iter().cloned().collect())
            }
            FlowLayer::Radial(r) => Ok(r.inverse(y)),
            FlowLayer::Householder(h) => Ok(h.apply(y)),
        }
    }

    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let d = z.len();
        match self {
            FlowLayer::Planar(p) => {
                let c = p.h.dh(p.pre(z));
                DMatrix::identity(d, d) + c * dvec(&p.u) * dvec(&p.w).transpose()
            }
            FlowLayer::Sylvester(s) => {
                let dd = DMatrix::from_diagonal(&s.pre(z).map(|x| s.h.dh(x)));
                DMatrix::identity(d, d) + &s.a * dd * s.bm.transpose()
            }
            FlowLayer::Radial(r) => {
                let (e, rr) = r.offset(z);
                let (lr, lt) = r.eig(rr);
                let mut j = DMatrix::identity(d, d) * lt;
                if rr > 0.0 {
                    let ev = dvec(&e) / rr;
                    j += (lr - lt) * &ev * ev.transpose();
                }
                j
            }
            FlowLayer::Householder(h) => {
                let v = dvec(&h.v);
                DMatrix::identity(d, d) - 2.0 * &v * v.transpose()
            }
        }
    }

    /// Signed distances from z to the layer's non-smooth sets: activation
    /// hyperplanes for ReLU layers, the centre for radial layers.
    pub fn nonsmooth_distances(&self, z: &[f64]) -> Vec<f64> {
        match self {
            FlowLayer::Planar(p) if p.h.is_relu() => {
                let nw = norm(&p.w);
                if nw == 0.0 {
                    vec![]
                } else {
                    vec![p.pre(z) / nw]
                }
            }
            FlowLayer::Sylvester(s) if s.h.is_relu() => {
                let pre = s.pre(z);
                (0..s.m())
                    .filter_map(|j| {
                        let nc = s.bm.column(j).norm();
                        (nc > 0.0).then(|| pre[j] / nc)
                    })
                    .collect()
            }
            FlowLayer::Radial(r) => vec![r.offset(z).1],
            _ => vec![],
        }
    }

    fn check_smooth(&self, z: &[f64], margin: f64) -> Result<()> {
        let band = margin * (1.0 + norm(z));
        if let Some(dist) = self.nonsmooth_distances(z).into_iter().find(|x| x.abs() < band) {
            return Err(Error::NonSmooth(format!(
                "{} layer: point within {:e} of a non-smooth set (distance {dist:e})",
                self.variant(),
                band
            )));
        }
        Ok(())
    }

    /// ∇_z log|det J_f(z)|.
    pub fn grad_log_det(&self, z: &[f64], margin: f64) -> Result<Vec<f64>> {
        self.check_smooth(z, margin)?;
        Ok(match self {
            FlowLayer::Planar(p) => {
                let s = p.pre(z);
                let k = dot(&p.u, &p.w) * p.h.d2h(s) / p.det(s);
                p.w.iter().map(|wi| k * wi).collect()
            }
            FlowLayer::Sylvester(s) => {
                if s.h.is_relu() {
                    return Ok(vec![0.0; z.len()]);
                }
                let pre = s.pre(z);
                let inv = s.inner(&pre).try_inverse().ok_or_else(|| Error::Singular("I + D·BᵀA".into()))?;
                let kn = &s.k * inv;
                let g = DVector::from_fn(s.m(), |j, _| s.h.d2h(pre[j]) * kn[(j, j)]);
                (&s.bm * g).iter().cloned().collect()
            }
            FlowLayer::Radial(r) => {
                let (e, rr) = r.offset(z);
                let ar = r.a + rr;
                let d = z.len() as f64;
                let dr = -(d - 1.0) * r.b / (ar * (ar + r.b)) - 2.0 * r.a * r.b / (ar * (ar * ar + r.a * r.b));
                e.iter().map(|ei| dr * ei / rr).collect()
            }
            FlowLayer::Householder(_) => vec![0.0; z.len()],
        })
    }

    /// J_f(z)^{−ᵀ}·x without forming J.
    pub fn inv_transpose_apply(&self, z: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            FlowLayer::Planar(p) => {
                // (I + c·w uᵀ)⁻¹ x = x − c·w (uᵀx)/(1 + c·uᵀw)
                let c = p.h.dh(p.pre(z));
                let k = c * dot(&p.u, x) / (1.0 + c * dot(&p.u, &p.w));
                x.iter().zip(&p.w).map(|(xi, wi)| xi - k * wi).collect()
            }
            FlowLayer::Sylvester(s) => {
                // (I + B·D·Aᵀ)⁻¹ x = x − B (I + D·AᵀB)⁻¹ D·Aᵀx
                let dd = s.pre(z).map(|v| s.h.dh(v));
                let xv = dvec(x);
                let rhs = s.a.tr_mul(&xv).component_mul(&dd);
                let mut mat = s.k.transpose();
                for j in 0..s.m() {
                    for i in 0..s.m() {
                        mat[(j, i)] *= dd[j];
                    }
                    mat[(j, j)] += 1.0;
                }
                let sol = mat.lu().solve(&rhs).ok_or_else(|| Error::Singular("I + D·AᵀB".into()))?;
                (xv - &s.bm * sol).iter().cloned().collect()
            }
            FlowLayer::Radial(r) => {
                let (e, rr) = r.offset(z);
                let (lr, lt) = r.eig(rr);
                if rr == 0.0 {
                    x.iter().map(|xi| xi / lt).collect()
                } else {
                    let ex = dot(&e, x) / rr;
                    let k = (1.0 / lr - 1.0 / lt) * ex / rr;
                    x.iter().zip(&e).map(|(xi, ei)| xi / lt + k * ei).collect()
                }
            }
            FlowLayer::Householder(h) => h.apply(x),
        })
    }
}

impl From<Planar> for FlowLayer {
    fn from(p: Planar) -> Self {
        FlowLayer::Planar(p)
    }
}
impl From<Sylvester> for FlowLayer {
    fn from(s: Sylvester) -> Self {
        FlowLayer::Sylvester(s)
    }
}
impl From<Radial> for FlowLayer {
    fn from(r: Radial) -> Self {
        FlowLayer::Radial(r)
    }
}
impl From<Householder> for FlowLayer {
    fn from(h: Householder) -> Self {
        FlowLayer::Householder(h)
    }
}
