use super::spec::DistSpec;
use super::Density;
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use rand::RngCore;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One-dimensional base function g for product densities ∏ g(z_i)^r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKernel {
    /// g(x) = x on (0, ∞); not integrable, used by the condition checks.
    Identity,
    /// standard normal density
    Gaussian,
    /// standard logistic density
    Logistic,
    /// standard Cauchy density
    Cauchy,
}

impl ScalarKernel {
    pub fn value(self, x: f64) -> f64 {
        match self {
            ScalarKernel::Identity => x,
            ScalarKernel::Gaussian => crate::special::norm_pdf(x),
            ScalarKernel::Logistic => {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ScalarKernel::Cauchy => 1.0 / (PI * (1.0 + x * x)),
        }
    }

    pub fn ln_value(self, x: f64) -> f64 {
        match self {
            ScalarKernel::Identity => x.ln(),
            ScalarKernel::Gaussian => crate::special::norm_logpdf(x),
            ScalarKernel::Logistic => -x.abs() - 2.0 * (-x.abs()).exp().ln_1p(),
            ScalarKernel::Cauchy => -PI.ln() - (x * x).ln_1p(),
        }
    }

    /// d/dx ln g(x); domain error where g ≤ 0.
    pub fn dlog(self, x: f64) -> Result<f64> {
        if self.value(x) <= 0.0 {
            return Err(Error::Domain(format!("g({x}) <= 0 for kernel {self:?}")));
        }
        Ok(match self {
            ScalarKernel::Identity => 1.0 / x,
            ScalarKernel::Gaussian => -x,
            ScalarKernel::Logistic => -(0.5 * x).tanh(),
            ScalarKernel::Cauchy => -2.0 * x / (1.0 + x * x),
        })
    }

    /// ln ∫ g^r over ℝ, when finite.
    pub fn ln_integral_pow(self, r: f64) -> Option<f64> {
        match self {
            ScalarKernel::Identity => None,
            ScalarKernel::Gaussian => Some(0.5 * (1.0 - r) * (2.0 * PI).ln() - 0.5 * r.ln()),
            // s = σ(x) turns ∫ (σ(1−σ))^r dx into B(r, r).
            ScalarKernel::Logistic => Some(2.0 * ln_gamma(r) - ln_gamma(2.0 * r)),
            // x = tan θ gives π^{-r} ∫ cos^{2r-2} θ dθ.
            ScalarKernel::Cauchy if r > 0.5 => {
                Some(-r * PI.ln() + 0.5 * PI.ln() + ln_gamma(r - 0.5) - ln_gamma(r))
            }
            ScalarKernel::Cauchy => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProductDensity1DPow {
    g: ScalarKernel,
    r: f64,
    d: usize,
    ln_z1: Option<f64>,
}

impl ProductDensity1DPow {
    pub fn new(g: ScalarKernel, r: f64, d: usize) -> Result<Self> {
        if !(r > 0.0) || d == 0 {
            return Err(Error::contract("product density needs r > 0 and d >= 1"));
        }
        Ok(ProductDensity1DPow { g, r, d, ln_z1: g.ln_integral_pow(r) })
    }

    pub fn kernel(&self) -> ScalarKernel {
        self.g
    }
    pub fn exponent(&self) -> f64 {
        self.r
    }
    /// Whether log_density is normalized (g^r integrable).
    pub fn is_normalized(&self) -> bool {
        self.ln_z1.is_some()
    }
}

impl Density for ProductDensity1DPow {
    fn dim(&self) -> usize {
        self.d
    }
    /// Normalized when g^r is integrable; otherwise the unnormalized value.
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for &x in z {
            s += self.r * self.g.ln_value(x);
        }
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        Ok(s - self.d as f64 * self.ln_z1.unwrap_or(0.0))
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        z.iter().map(|&x| Ok(self.r * self.g.dlog(x)?)).collect()
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        if self.d != 1 || (self.r - 1.0).abs() > 0.0 {
            return Err(Error::Unsupported("product-density cdf beyond d = 1, r = 1".into()));
        }
        Ok(match self.g {
            ScalarKernel::Gaussian => crate::special::norm_cdf(x),
            ScalarKernel::Logistic => 1.0 / (1.0 + (-x).exp()),
            ScalarKernel::Cauchy => 0.5 + x.atan() / PI,
            ScalarKernel::Identity => return Err(Error::Unsupported("identity kernel cdf".into())),
        })
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        (vec![0.0; self.d], 2.0 / self.r.sqrt())
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        let draw: Box<dyn Fn(&mut dyn RngCore) -> f64> = match self.g {
            ScalarKernel::Gaussian => {
                let s = 1.0 / self.r.sqrt();
                Box::new(move |rng| { let z: f64 = StandardNormal.sample(rng); s * z })
            }
            ScalarKernel::Logistic => {
                let beta = Beta::new(self.r, self.r).map_err(|e| Error::contract(e.to_string()))?;
                Box::new(move |rng| {
                    let s: f64 = beta.sample(rng);
                    (s / (1.0 - s)).ln()
                })
            }
            _ => return Err(Error::Unsupported(format!("sampling product of {:?}", self.g))),
        };
        Ok((0..n).map(|_| (0..self.d).map(|_| draw(&mut *rng)).collect()).collect())
    }
    fn name(&self) -> String {
        format!("ProductDensity1DPow({:?}^{}, d={})", self.g, self.r, self.d)
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::ProductPow { g: self.g, r: self.r, d: self.d })
    }
}
