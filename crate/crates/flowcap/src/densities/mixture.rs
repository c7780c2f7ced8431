use super::spec::DistSpec;
use super::{Density, GaussianD};
use crate::error::{Error, Result};
use crate::linalg;
use crate::special::logsumexp;
use rand::{Rng, RngCore};

/// Finite Gaussian mixture; duplicate components are kept as given.
#[derive(Debug, Clone)]
pub struct MixtureGaussianD {
    weights: Vec<f64>,
    components: Vec<GaussianD>,
    log_w: Vec<f64>,
}

impl MixtureGaussianD {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianD>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::contract("mixture needs one weight per component and at least one component"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::contract("mixture weights must be nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("mixture weights sum to {s}, not 1")));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::contract("mixture components differ in dimension"));
        }
        let log_w = weights.iter().map(|w| w.ln()).collect();
        Ok(MixtureGaussianD { weights, components, log_w })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn components(&self) -> &[GaussianD] {
        &self.components
    }

    /// Posterior responsibilities r_i(z).
    pub fn responsibilities(&self, z: &[f64]) -> Vec<f64> {
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_w)
            .map(|(c, lw)| lw + c.logpdf_vec(z))
            .collect();
        let lse = logsumexp(&terms);
        terms.iter().map(|t| (t - lse).exp()).collect()
    }

    /// Whether all components share one covariance (exactly).
    pub fn shared_covariance(&self) -> bool {
        let c0 = self.components[0].cov();
        self.components.iter().all(|c| c.cov() == c0)
    }
}

impl Density for MixtureGaussianD {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_w)
            .map(|(c, lw)| lw + c.logpdf_vec(z))
            .collect();
        Ok(logsumexp(&terms))
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.responsibilities(z);
        let mut g = vec![0.0; z.len()];
        for (ri, c) in r.iter().zip(&self.components) {
            if *ri == 0.0 {
                continue;
            }
            for (gk, ck) in g.iter_mut().zip(c.grad_vec(z).iter()) {
                *gk += ri * ck;
            }
        }
        Ok(g)
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        let mut s = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            s += w * c.cdf(x)?;
        }
        Ok(s)
    }
    fn sf(&self, x: f64) -> Result<f64> {
        let mut s = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            s += w * c.sf(x)?;
        }
        Ok(s)
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for k in 0..d {
                m[k] += w * c.mean()[k];
            }
        }
        let mut s: f64 = 0.0;
        for c in &self.components {
            let (cm, cs) = c.location_scale();
            let off = linalg::norm(&cm.iter().zip(&m).map(|(a, b)| a - b).collect::<Vec<_>>());
            s = s.max(cs + off);
        }
        (m, s)
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.components.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            out.push(self.components[k].draw(rng));
        }
        Ok(out)
    }
    fn name(&self) -> String {
        format!("MixtureGaussianD(k={}, d={})", self.components.len(), self.dim())
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::Mixture {
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| super::spec::GaussianSpec {
                    mean: c.mean().iter().cloned().collect(),
                    cov: linalg::to_rows(c.cov()),
                })
                .collect(),
        })
    }
}
