use super::spec::DistSpec;
use super::Density;
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use statrs::function::beta::beta_reg;
use rand::RngCore;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Isotropic multivariate Student-t; the default heavy-tailed proposal
/// for importance sampling.
#[derive(Debug, Clone)]
pub struct StudentT {
    loc: Vec<f64>,
    scale: f64,
    dof: f64,
    log_norm: f64,
}

impl StudentT {
    pub fn new(loc: Vec<f64>, scale: f64, dof: f64) -> Result<Self> {
        if loc.is_empty() || !(scale > 0.0) || !(dof > 0.0) {
            return Err(Error::contract("StudentT needs d >= 1, scale > 0, dof > 0"));
        }
        let d = loc.len() as f64;
        let log_norm = ln_gamma(0.5 * (dof + d))
            - ln_gamma(0.5 * dof)
            - 0.5 * d * (dof * std::f64::consts::PI).ln()
            - d * scale.ln();
        Ok(StudentT { loc, scale, dof, log_norm })
    }

    pub fn loc(&self) -> &[f64] {
        &self.loc
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn dof(&self) -> f64 {
        self.dof
    }

    fn r2(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.loc)
            .map(|(a, b)| ((a - b) / self.scale).powi(2))
            .sum()
    }
}

impl Density for StudentT {
    fn dim(&self) -> usize {
        self.loc.len()
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        let d = self.loc.len() as f64;
        Ok(self.log_norm - 0.5 * (self.dof + d) * (self.r2(z) / self.dof).ln_1p())
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.loc.len() as f64;
        let k = -(self.dof + d) / (self.dof * self.scale * self.scale * (1.0 + self.r2(z) / self.dof));
        Ok(z.iter().zip(&self.loc).map(|(a, b)| k * (a - b)).collect())
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        (self.loc.clone(), self.scale)
    }
    /// 1D only: the upper tail is ½·I_{ν/(ν+t²)}(ν/2, ½).
    fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.sf(x)?)
    }
    fn sf(&self, x: f64) -> Result<f64> {
        if self.loc.len() != 1 {
            return Err(Error::Unsupported(format!("cdf of {}", self.name())));
        }
        let t = (x - self.loc[0]) / self.scale;
        if t.is_infinite() {
            return Ok(if t > 0.0 { 0.0 } else { 1.0 });
        }
        let tail = 0.5 * beta_reg(0.5 * self.dof, 0.5, self.dof / (self.dof + t * t));
        Ok(if t >= 0.0 { tail } else { 1.0 - tail })
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        let chi = ChiSquared::new(self.dof).map_err(|e| Error::contract(e.to_string()))?;
        Ok((0..n)
            .map(|_| {
                let w: f64 = chi.sample(&mut *rng);
                let f = self.scale / (w / self.dof).sqrt();
                self.loc
                    .iter()
                    .map(|m| {
                        let e: f64 = StandardNormal.sample(&mut *rng);
                        m + f * e
                    })
                    .collect()
            })
            .collect())
    }
    fn name(&self) -> String {
        format!("StudentT(d={}, dof={})", self.loc.len(), self.dof)
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::StudentT { loc: self.loc.clone(), scale: self.scale, dof: self.dof })
    }
}
