use super::{check_unit, invert_increasing, Density};
use crate::error::{Error, Result};
use crate::special::{gl20, norm_pdf};
use rand::{Rng, RngCore};
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A 1D density given by a closure on a bounded interval-union support;
/// the CDF is tabulated by Gauss–Legendre panels.
#[derive(Clone)]
pub struct QuadratureDensity1D {
    name: String,
    pdf: ScalarFn,
    dpdf: Option<ScalarFn>,
    support: Vec<(f64, f64)>,
    kinks: Vec<f64>,
    panels: Vec<(f64, f64)>,
    cum: Vec<f64>,
    ln_z: f64,
}

impl fmt::Debug for QuadratureDensity1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadratureDensity1D")
            .field("name", &self.name)
            .field("support", &self.support)
            .finish()
    }
}

impl QuadratureDensity1D {
    /// `pdf` may be unnormalized; `kinks` are interior non-smooth points.
    pub fn new(
        name: &str,
        pdf: ScalarFn,
        dpdf: Option<ScalarFn>,
        support: Vec<(f64, f64)>,
        kinks: Vec<f64>,
        panels_per_segment: usize,
    ) -> Result<Self> {
        if support.is_empty()
            || support.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
            || support.windows(2).any(|w| w[0].1 > w[1].0)
        {
            return Err(Error::contract("support must be ordered, disjoint, bounded intervals"));
        }
        let mut panels = Vec::new();
        for &(a, b) in &support {
            let mut cuts = vec![a];
            cuts.extend(kinks.iter().cloned().filter(|&k| k > a && k < b));
            cuts.push(b);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let h = (w[1] - w[0]) / panels_per_segment as f64;
                for k in 0..panels_per_segment {
                    let lo = w[0] + h * k as f64;
                    let hi = if k + 1 == panels_per_segment { w[1] } else { lo + h };
                    panels.push((lo, hi));
                }
            }
        }
        let gl = gl20();
        let mut cum = vec![0.0; panels.len() + 1];
        for (i, &(a, b)) in panels.iter().enumerate() {
            let m = gl.integrate(a, b, |x| pdf(x));
            if !(m >= 0.0) {
                return Err(Error::contract("density closure is negative or NaN on its support"));
            }
            cum[i + 1] = cum[i] + m;
        }
        let z = cum[panels.len()];
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::contract("density closure has no mass"));
        }
        for c in cum.iter_mut() {
            *c /= z;
        }
        Ok(QuadratureDensity1D {
            name: name.to_string(),
            pdf,
            dpdf,
            support,
            kinks,
            panels,
            cum,
            ln_z: z.ln(),
        })
    }

    fn inside(&self, x: f64) -> bool {
        self.support.iter().any(|&(a, b)| x >= a && x <= b)
    }

    pub fn pdf_at(&self, x: f64) -> f64 {
        if self.inside(x) {
            (self.pdf)(x) / self.ln_z.exp()
        } else {
            0.0
        }
    }
}

impl Density for QuadratureDensity1D {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(if self.inside(z[0]) { (self.pdf)(z[0]).ln() - self.ln_z } else { f64::NEG_INFINITY })
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = z[0];
        let d = self
            .dpdf
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("gradient of {}", self.name)))?;
        if self.kinks.iter().chain(self.support.iter().flat_map(|s| [&s.0, &s.1])).any(|&k| (x - k).abs() < 1e-12 * (1.0 + k.abs())) {
            return Err(Error::NonSmooth(format!("{x} is a kink of {}", self.name)));
        }
        let p = (self.pdf)(x);
        if !self.inside(x) || p <= 0.0 {
            return Err(Error::NonSmooth(format!("density of {} vanishes at {x}", self.name)));
        }
        Ok(vec![d(x) / p])
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        let i = self.panels.partition_point(|p| p.0 <= x);
        if i == 0 {
            return Ok(0.0);
        }
        let (a, b) = self.panels[i - 1];
        if x >= b {
            return Ok(self.cum[i]);
        }
        let part = gl20().integrate(a, x, |t| (self.pdf)(t)) / self.ln_z.exp();
        Ok((self.cum[i - 1] + part).clamp(0.0, 1.0))
    }
    fn sf(&self, x: f64) -> Result<f64> {
        let i = self.panels.partition_point(|p| p.0 <= x);
        if i == 0 {
            return Ok(1.0);
        }
        let (_, b) = self.panels[i - 1];
        if x >= b {
            return Ok(1.0 - self.cum[i]);
        }
        let part = gl20().integrate(x, b, |t| (self.pdf)(t)) / self.ln_z.exp();
        Ok((1.0 - self.cum[i] + part).clamp(0.0, 1.0))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        // First panel whose end cumulative reaches u, then invert inside it.
        let j = self.cum[1..].partition_point(|&c| c < u).min(self.panels.len() - 1);
        let mut j = j;
        while j + 1 < self.panels.len() && self.cum[j + 1] - self.cum[j] <= 0.0 {
            j += 1;
        }
        let (mut lo, mut hi) = self.panels[j];
        if self.cum[j] >= u {
            return Ok(lo);
        }
        invert_increasing(|x| self.cdf(x).map(|f| f - u), |x| self.pdf_at(x), &mut lo, &mut hi)
    }
    fn support(&self) -> Vec<(f64, f64)> {
        self.support.clone()
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.support.iter().flat_map(|s| [s.0, s.1]).collect();
        v.extend(self.kinks.iter().cloned());
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        let a = self.support[0].0;
        let b = self.support.last().unwrap().1;
        (vec![0.5 * (a + b)], 0.5 * (b - a))
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
        self.name.clone()
    }
    fn to_spec(&self) -> Option<super::spec::DistSpec> {
        match self.name.as_str() {
            "fig1" | "bimodal" => Some(super::spec::DistSpec::NamedTarget { name: self.name.clone() }),
            _ => None,
        }
    }
}

/// p(x) = ¾·min((|x|−1)², (|x|−3)²) on 1 ≤ |x| ≤ 3.
pub fn fig1_target() -> QuadratureDensity1D {
    let pdf = |x: f64| {
        let a = x.abs();
        if (1.0..=3.0).contains(&a) {
            0.75 * ((a - 1.0).powi(2)).min((a - 3.0).powi(2))
        } else {
            0.0
        }
    };
    let dpdf = |x: f64| {
        let a = x.abs();
        let s = x.signum();
        if a < 2.0 {
            1.5 * (a - 1.0) * s
        } else {
            1.5 * (a - 3.0) * s
        }
    };
    QuadratureDensity1D::new(
        "fig1",
        Arc::new(pdf),
        Some(Arc::new(dpdf)),
        vec![(-3.0, -1.0), (1.0, 3.0)],
        vec![-2.0, 2.0],
        256,
    )
    .expect("fig1 target is a valid density")
}

/// Two unequal bumps on [−4, 4]; the bimodal benchmark target.
pub fn bimodal_target() -> QuadratureDensity1D {
    const W: [f64; 2] = [0.55, 0.45];
    const M: [f64; 2] = [-1.5, 1.3];
    const S: [f64; 2] = [0.5, 0.6];
    let pdf = |x: f64| {
        (0..2)
            .map(|k| W[k] * norm_pdf((x - M[k]) / S[k]) / S[k])
            .sum::<f64>()
    };
    let dpdf = |x: f64| {
        (0..2)
            .map(|k| {
                let u = (x - M[k]) / S[k];
                -W[k] * u * norm_pdf(u) / (S[k] * S[k])
            })
            .sum::<f64>()
    };
    QuadratureDensity1D::new("bimodal", Arc::new(pdf), Some(Arc::new(dpdf)), vec![(-4.0, 4.0)], vec![], 512)
        .expect("bimodal target is a valid density")
}
