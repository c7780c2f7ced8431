use super::spec::DistSpec;
use super::Density;
use crate::error::{Error, Result};
use crate::special::{ln_gamma, ln_gamma_p, ln_gamma_q, log_add};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    /// ∝ exp(−‖z‖^τ)
    Pure,
    /// ∝ exp(−d) inside the radius-d^{1/τ} ball, exp(−‖z‖^τ) outside.
    FlatCore,
}

#[derive(Debug, Clone)]
pub struct RadialDensity {
    d: usize,
    tau: f64,
    kind: RadialKind,
    log_norm: f64,
    // ln of the radial integrals: core part and outer part (FlatCore only).
    ln_core: f64,
    ln_outer: f64,
}

/// ln of the surface area of the unit sphere in ℝ^d.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    std::f64::consts::LN_2 + h * std::f64::consts::PI.ln() - ln_gamma(h)
}

impl RadialDensity {
    pub fn new(d: usize, tau: f64, kind: RadialKind) -> Result<Self> {
        if d == 0 || !(tau > 0.0 && tau < 1.0) {
            return Err(Error::contract(format!("RadialDensity needs d >= 1 and tau in (0,1), got d={d}, tau={tau}")));
        }
        let df = d as f64;
        let a = df / tau;
        // ∫_0^∞ e^{-r^τ} r^{d-1} dr = Γ(d/τ)/τ after s = r^τ.
        let (ln_core, ln_outer) = match kind {
            RadialKind::Pure => (f64::NEG_INFINITY, ln_gamma(a) - tau.ln()),
            RadialKind::FlatCore => {
                let ln_r = df.ln() / tau;
                let core = -df + df * ln_r - df.ln();
                let outer = ln_gamma(a) + ln_gamma_q(a, df) - tau.ln();
                (core, outer)
            }
        };
        let ln_radial = log_add(ln_core, ln_outer);
        if !ln_radial.is_finite() {
            return Err(Error::NumericRange(format!("radial normalizer overflow at d={d}, tau={tau}")));
        }
        let log_norm = ln_sphere_area(d) + ln_radial;
        Ok(RadialDensity { d, tau, kind, log_norm, ln_core, ln_outer })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn kind(&self) -> RadialKind {
        self.kind
    }
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }
    /// Core radius d^{1/τ}.
    pub fn core_radius(&self) -> f64 {
        (self.d as f64).powf(1.0 / self.tau)
    }

    /// Unnormalized log-density as a function of the radius.
    pub fn log_unnormalized(&self, r: f64) -> f64 {
        match self.kind {
            RadialKind::Pure => -r.powf(self.tau),
            RadialKind::FlatCore => {
                if r <= self.core_radius() {
                    -(self.d as f64)
                } else {
                    -r.powf(self.tau)
                }
            }
        }
    }

    /// P(‖Z‖ ≤ r).
    pub fn radius_cdf(&self, r: f64) -> f64 {
        let a = self.d as f64 / self.tau;
        let ln_total = log_add(self.ln_core, self.ln_outer);
        match self.kind {
            RadialKind::Pure => ln_gamma_p(a, r.powf(self.tau)).exp(),
            RadialKind::FlatCore => {
                let big_r = self.core_radius();
                let df = self.d as f64;
                if r <= big_r {
                    (self.ln_core - ln_total + df * (r / big_r).ln()).exp()
                } else {
                    // core + Γ-mass between R^τ = d and r^τ
                    let lower = (ln_gamma_q(a, df).exp() - ln_gamma_q(a, r.powf(self.tau)).exp()).max(0.0);
                    let outer = (ln_gamma(a) - self.tau.ln() - ln_total).exp() * lower;
                    (self.ln_core - ln_total).exp() + outer
                }
            }
        }
    }

    fn radius(z: &[f64]) -> f64 {
        z.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Density for RadialDensity {
    fn dim(&self) -> usize {
        self.d
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.log_unnormalized(Self::radius(z)) - self.log_norm)
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = Self::radius(z);
        if r == 0.0 && self.kind == RadialKind::Pure {
            return Err(Error::NonSmooth("radial density at the origin".into()));
        }
        if self.kind == RadialKind::FlatCore {
            let big_r = self.core_radius();
            if (r - big_r).abs() <= 1e-12 * big_r {
                return Err(Error::NonSmooth("flat-core seam".into()));
            }
            if r < big_r {
                return Ok(vec![0.0; self.d]);
            }
        }
        let k = -self.tau * r.powf(self.tau - 2.0);
        Ok(z.iter().map(|x| k * x).collect())
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        if self.d != 1 {
            return Err(Error::Dimension { expected: 1, got: self.d });
        }
        let m = 0.5 * self.radius_cdf(x.abs());
        Ok(if x >= 0.0 { 0.5 + m } else { 0.5 - m })
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        // Typical radius ≈ (d/τ)^{1/τ}; per-coordinate spread is that over √d.
        let r = (self.d as f64 / self.tau).powf(1.0 / self.tau);
        (vec![0.0; self.d], r / (self.d as f64).sqrt())
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        let a = self.d as f64 / self.tau;
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::contract(e.to_string()))?;
        let ln_total = log_add(self.ln_core, self.ln_outer);
        let p_core = (self.ln_core - ln_total).exp();
        let df = self.d as f64;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let r = if self.kind == RadialKind::FlatCore && rng.random::<f64>() < p_core {
                let u: f64 = rng.random();
                self.core_radius() * u.powf(1.0 / df)
            } else {
                let mut s: f64 = gamma.sample(&mut *rng);
                if self.kind == RadialKind::FlatCore {
                    let mut tries = 0;
                    while s <= df {
                        s = gamma.sample(&mut *rng);
                        tries += 1;
                        if tries > 1_000_000 {
                            return Err(Error::NumericRange("flat-core tail rejection sampler".into()));
                        }
                    }
                }
                s.powf(1.0 / self.tau)
            };
            let mut dir: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(&mut *rng)).collect();
            let nrm = Self::radius(&dir);
            for x in dir.iter_mut() {
                *x *= r / nrm;
            }
            out.push(dir);
        }
        Ok(out)
    }
    fn name(&self) -> String {
        format!("RadialDensity(d={}, tau={}, {:?})", self.d, self.tau, self.kind)
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::Radial { d: self.d, tau: self.tau, variant: self.kind })
    }
}
