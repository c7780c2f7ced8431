use super::{pdf1, Density, DynDensity, Gaussian1D};
use crate::error::{Error, Result};
use crate::special::{norm_pdf, norm_quantile};
use rand::{Rng, RngCore};

#[derive(Debug, Clone, Copy, PartialEq)]
enum SegKind {
    Tail(Gaussian1D),
    Scaled(f64),
    Const(f64),
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    a: f64,
    b: f64,
    kind: SegKind,
}

/// Full-support density p̃ built from a density p on a bounded
/// interval-union support, with ‖p − p̃‖₁ = εγ.
#[derive(Debug, Clone)]
pub struct RelaxedDensity1D {
    base: DynDensity,
    eps: f64,
    delta: f64,
    gamma: f64,
    n_intervals: usize,
    tail_mass: f64,
    tail_sup: f64,
    segs: Vec<Seg>,
    cum: Vec<f64>,
    suffix: Vec<f64>,
}

const SCAN_POINTS: usize = 4096;

/// Roots of p − Δ on (a, b), plus the base's own breakpoints there.
fn level_cuts(p: &dyn Density, delta: f64, a: f64, b: f64) -> Vec<f64> {
    let f = |x: f64| pdf1(p, x) - delta;
    let mut cuts = vec![a];
    let h = (b - a) / SCAN_POINTS as f64;
    let mut prev_x = a + 0.5 * h;
    let mut prev = f(prev_x);
    for k in 1..SCAN_POINTS {
        let x = a + (k as f64 + 0.5) * h;
        let v = f(x);
        if (prev < 0.0) != (v < 0.0) {
            let (mut lo, mut hi) = (prev_x, x);
            let lo_neg = prev < 0.0;
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if (f(m) < 0.0) == lo_neg {
                    lo = m;
                } else {
                    hi = m;
                }
                if hi - lo < 1e-15 * (1.0 + m.abs()) {
                    break;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        prev = v;
        prev_x = x;
    }
    cuts.extend(p.breakpoints().into_iter().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Relaxes `p` to full support: keep density ≥ Δ = 2/Σ(r_i − l_i), scale
/// the rest by (1 − ε/2), spread the removed mass εγ/2 over the gaps and
/// two Gaussian tails.
pub fn full_support_relaxation(p: DynDensity, eps: f64) -> Result<RelaxedDensity1D> {
    if p.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: p.dim() });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::contract(format!("eps must lie in (0,1), got {eps}")));
    }
    let support = p.support();
    if support.is_empty() || support.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::contract("full_support_relaxation needs bounded interval-union support"));
    }
    p.cdf(support[0].0)?;
    let n = support.len();
    let total_len: f64 = support.iter().map(|(a, b)| b - a).sum();
    let delta = 2.0 / total_len;

    let mut inner: Vec<Seg> = Vec::new();
    let mut gamma = 0.0;
    for &(l, r) in &support {
        let cuts = level_cuts(p.as_ref(), delta, l, r);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let below = pdf1(p.as_ref(), mid) < delta;
            if below {
                gamma += p.cdf(w[1])? - p.cdf(w[0])?;
            }
            let s = if below { 1.0 - 0.5 * eps } else { 1.0 };
            inner.push(Seg { a: w[0], b: w[1], kind: SegKind::Scaled(s) });
        }
    }
    if !(gamma > 0.0) {
        return Err(Error::hypothesis("no mass below Δ (γ = 0); nothing to redistribute"));
    }

    let gap_const: Vec<f64> = support
        .windows(2)
        .map(|w| eps * gamma / (2.0 * n as f64 * (w[1].0 - w[0].1)))
        .collect();
    let tail_mass = eps * gamma / (4.0 * n as f64);
    let c = norm_quantile(tail_mass);
    let edge_value = |gap: Option<f64>, x: f64| -> f64 {
        gap.unwrap_or_else(|| {
            let v = pdf1(p.as_ref(), x);
            if v < delta { (1.0 - 0.5 * eps) * v } else { v }
        })
    };
    // Tail density at the edge is φ(c)/s: continuity when possible, never above ε/2.
    let tail_sigma = |edge: f64| -> f64 {
        let cap = 2.0 * norm_pdf(c) / eps;
        if edge > 0.0 { (norm_pdf(c) / edge).max(cap) } else { cap }
    };
    let l1 = support[0].0;
    let rn = support[n - 1].1;
    let s_left = tail_sigma(edge_value(gap_const.first().cloned(), l1));
    let s_right = tail_sigma(edge_value(gap_const.last().cloned(), rn));
    let left = Gaussian1D::new(l1 - c * s_left, s_left)?;
    let right = Gaussian1D::new(rn + c * s_right, s_right)?;
    let tail_sup = (norm_pdf(c) / s_left).max(norm_pdf(c) / s_right);

    let mut segs = vec![Seg { a: f64::NEG_INFINITY, b: l1, kind: SegKind::Tail(left) }];
    let mut gi = 0;
    for (k, seg) in inner.into_iter().enumerate() {
        if k > 0 {
            let prev_b = segs.last().unwrap().b;
            if seg.a > prev_b {
                segs.push(Seg { a: prev_b, b: seg.a, kind: SegKind::Const(gap_const[gi]) });
                gi += 1;
            }
        }
        segs.push(seg);
    }
    segs.push(Seg { a: rn, b: f64::INFINITY, kind: SegKind::Tail(right) });

    let mut out = RelaxedDensity1D {
        base: p,
        eps,
        delta,
        gamma,
        n_intervals: n,
        tail_mass,
        tail_sup,
        segs,
        cum: Vec::new(),
        suffix: Vec::new(),
    };
    let masses: Vec<f64> = (0..out.segs.len())
        .map(|i| out.seg_mass(i, out.segs[i].a, out.segs[i].b))
        .collect::<Result<_>>()?;
    out.cum = vec![0.0; masses.len() + 1];
    out.suffix = vec![0.0; masses.len() + 1];
    for i in 0..masses.len() {
        out.cum[i + 1] = out.cum[i] + masses[i];
    }
    for i in (0..masses.len()).rev() {
        out.suffix[i] = out.suffix[i + 1] + masses[i];
    }
    let total = out.cum[masses.len()];
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NumericRange(format!("relaxed density integrates to {total}")));
    }
    Ok(out)
}

impl RelaxedDensity1D {
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }
    /// Mass carried by each Gaussian tail, εγ/(4n).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }
    /// Largest tail density value; at most ε/2 by construction.
    pub fn tail_sup(&self) -> f64 {
        self.tail_sup
    }
    pub fn sup_constraint_ok(&self) -> bool {
        self.tail_sup <= 0.5 * self.eps * (1.0 + 1e-12)
    }
    /// ‖p − p̃‖₁ = εγ by construction.
    pub fn l1_to_base(&self) -> f64 {
        self.eps * self.gamma
    }
    pub fn gap_constants(&self) -> Vec<f64> {
        self.segs
            .iter()
            .filter_map(|s| match s.kind {
                SegKind::Const(c) => Some(c),
                _ => None,
            })
            .collect()
    }
    pub fn total_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn seg_index(&self, x: f64) -> usize {
        self.segs.partition_point(|s| s.a <= x).saturating_sub(1)
    }

    fn seg_mass(&self, i: usize, a: f64, b: f64) -> Result<f64> {
        Ok(match self.segs[i].kind {
            SegKind::Tail(g) => g.mass(a, b),
            SegKind::Const(c) => c * (b - a),
            SegKind::Scaled(s) => s * (self.base.cdf(b)? - self.base.cdf(a)?),
        })
    }

    pub fn pdf_at(&self, x: f64) -> f64 {
        let seg = &self.segs[self.seg_index(x)];
        match seg.kind {
            SegKind::Tail(g) => g.pdf(x),
            SegKind::Const(c) => c,
            SegKind::Scaled(s) => s * pdf1(self.base.as_ref(), x),
        }
    }
}

impl Density for RelaxedDensity1D {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.pdf_at(z[0]).ln())
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = z[0];
        if self.breakpoints().iter().any(|&t| (x - t).abs() <= 1e-12 * (1.0 + t.abs())) {
            return Err(Error::NonSmooth(format!("{x} is a segment boundary")));
        }
        match self.segs[self.seg_index(x)].kind {
            SegKind::Tail(g) => g.grad_log_density_unchecked(z),
            SegKind::Const(_) => Ok(vec![0.0]),
            SegKind::Scaled(_) => self.base.grad_log_density_unchecked(z),
        }
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        let i = self.seg_index(x);
        let a = self.segs[i].a;
        Ok((self.cum[i] + self.seg_mass(i, a, x)?).clamp(0.0, 1.0))
    }
    fn sf(&self, x: f64) -> Result<f64> {
        let i = self.seg_index(x);
        let b = self.segs[i].b;
        Ok((self.suffix[i + 1] + self.seg_mass(i, x, b)?).clamp(0.0, 1.0))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.segs.iter().skip(1).map(|s| s.a).collect()
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        self.base.location_scale()
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u: f64 = rng.random();
            if u > 0.0 {
                out.push(vec![self.quantile(u)?]);
            }
        }
        Ok(out)
    }
    fn name(&self) -> String {
        format!("Relaxed({}, eps={})", self.base.name(), self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::fig1_target;
    use std::sync::Arc;

    #[test]
    fn fig1_delta_and_mass() {
        let r = full_support_relaxation(Arc::new(fig1_target()), 0.1).unwrap();
        assert_eq!(r.delta(), 0.5);
        assert!((r.total_mass() - 1.0).abs() < 1e-10);
        assert!(r.l1_to_base() <= 0.1);
        assert!(r.sup_constraint_ok());
        assert_eq!(r.gap_constants().len(), 1);
    }

    // Closed form: p ≥ ½ exactly on |x| ∈ [1+a, 3−a] with a = √(2/3), whose
    // mass is 1 − a³, so γ = a³.
    #[test]
    fn fig1_gamma_matches_closed_form() {
        let r = full_support_relaxation(Arc::new(fig1_target()), 0.1).unwrap();
        let gamma = (2.0f64 / 3.0).powf(1.5);
        assert!((r.gamma() - gamma).abs() < 1e-12, "{} vs {gamma}", r.gamma());
    }

    #[test]
    fn relaxed_tail_masses() {
        let r = full_support_relaxation(Arc::new(fig1_target()), 0.2).unwrap();
        assert!((r.cdf(-3.0).unwrap() - r.tail_mass()).abs() < 1e-15);
        assert!((r.sf(3.0).unwrap() - r.tail_mass()).abs() < 1e-15);
    }
}
