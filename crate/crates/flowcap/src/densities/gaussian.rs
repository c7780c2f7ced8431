use super::spec::DistSpec;
use super::Density;
use crate::error::{Error, Result};
use crate::linalg;
use crate::special::{norm_cdf, norm_isf, norm_logpdf, norm_quantile, norm_sf, LN_SQRT_2PI};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    pub mu: f64,
    pub sigma: f64,
}

impl Gaussian1D {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::contract(format!("Gaussian1D needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Gaussian1D { mu, sigma })
    }

    pub fn standard() -> Self {
        Gaussian1D { mu: 0.0, sigma: 1.0 }
    }

    pub fn std(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        norm_logpdf(self.std(x)) - self.sigma.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        norm_cdf(self.std(x))
    }

    pub fn sf_at(&self, x: f64) -> f64 {
        norm_sf(self.std(x))
    }

    /// ∫_a^b of this Gaussian, tail-accurate.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        crate::special::norm_interval(self.std(a), self.std(b))
    }
}

impl Density for Gaussian1D {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.logpdf(z[0]))
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-(z[0] - self.mu) / (self.sigma * self.sigma)])
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_at(x))
    }
    fn sf(&self, x: f64) -> Result<f64> {
        Ok(self.sf_at(x))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        super::check_unit(u)?;
        Ok(self.mu + self.sigma * norm_quantile(u))
    }
    fn isf(&self, q: f64) -> Result<f64> {
        super::check_unit(q)?;
        Ok(self.mu + self.sigma * norm_isf(q))
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        (vec![self.mu], self.sigma)
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        Ok((0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                vec![self.mu + self.sigma * e]
            })
            .collect())
    }
    fn name(&self) -> String {
        format!("Gaussian1D({}, {})", self.mu, self.sigma)
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::Gaussian1d { mu: self.mu, sigma: self.sigma })
    }
}

/// Multivariate normal with cached Cholesky factor and precision.
#[derive(Debug, Clone)]
pub struct GaussianD {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det: f64,
}

impl GaussianD {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::contract("GaussianD: mean/cov shapes disagree"));
        }
        linalg::check_symmetric(&cov, "cov")?;
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::contract("GaussianD: covariance is not positive definite"))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(GaussianD { mean, cov, chol: l, precision, log_det })
    }

    pub fn standard(d: usize) -> Self {
        GaussianD::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn from_slices(mean: &[f64], cov: DMatrix<f64>) -> Result<Self> {
        GaussianD::new(DVector::from_column_slice(mean), cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub(crate) fn logpdf_vec(&self, z: &[f64]) -> f64 {
        let d = self.mean.len();
        let diff = DVector::from_iterator(d, z.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * y.norm_squared() - 0.5 * self.log_det - d as f64 * LN_SQRT_2PI
    }

    pub(crate) fn grad_vec(&self, z: &[f64]) -> DVector<f64> {
        let d = self.mean.len();
        let diff = DVector::from_iterator(d, z.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        -(&self.precision * diff)
    }

    pub(crate) fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.mean.len();
        let e = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut *rng)));
        (&self.mean + &self.chol * e).iter().cloned().collect()
    }

    fn as_1d(&self) -> Result<Gaussian1D> {
        if self.mean.len() != 1 {
            return Err(Error::Dimension { expected: 1, got: self.mean.len() });
        }
        Gaussian1D::new(self.mean[0], self.cov[(0, 0)].sqrt())
    }
}

impl Density for GaussianD {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.logpdf_vec(z))
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.grad_vec(z).iter().cloned().collect())
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.as_1d()?.cdf_at(x))
    }
    fn sf(&self, x: f64) -> Result<f64> {
        Ok(self.as_1d()?.sf_at(x))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        self.as_1d()?.quantile(u)
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        let s = self.cov.diagonal().iter().cloned().fold(0.0, f64::max).sqrt();
        (self.mean.iter().cloned().collect(), s)
    }
    fn sample_with(&self, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Vec<f64>>> {
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }
    fn name(&self) -> String {
        format!("GaussianD(d={})", self.mean.len())
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::Gaussian {
            mean: self.mean.iter().cloned().collect(),
            cov: linalg::to_rows(&self.cov),
        })
    }
}
