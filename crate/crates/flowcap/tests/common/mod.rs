// Shared random generators for the integration tests.
#![allow(dead_code)]

use flowcap::densities::{Density, Gaussian1D, GaussianD, MixtureGaussianD, PiecewiseGaussian1D};
use flowcap::flows::{FlowLayer, FlowStack, Householder, Nonlinearity, Planar, Radial, Sylvester};
use flowcap::special::norm_quantile;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<f64> {
    (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn smooth_h(rng: &mut ChaCha8Rng) -> Nonlinearity {
    match rng.random_range(0..3) {
        0 => Nonlinearity::Tanh,
        1 => Nonlinearity::Sigmoid,
        _ => Nonlinearity::Arctan,
    }
}

/// Planar layer with uᵀw ≥ −½, invertible for every supported h.
pub fn random_planar(rng: &mut ChaCha8Rng, d: usize, h: Nonlinearity) -> FlowLayer {
    let w = normal_vec(rng, d, 1.0);
    let mut u = normal_vec(rng, d, 1.0);
    let uw: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let ww: f64 = w.iter().map(|x| x * x).sum();
    if uw < -0.5 {
        let k = (-0.5 - uw) / ww;
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui += k * wi;
        }
    }
    Planar::new(u, w, rng.random_range(-1.0..1.0), h).unwrap().into()
}

/// Sylvester layer (d ≥ 2); draws are retried until the guard accepts.
pub fn random_sylvester(rng: &mut ChaCha8Rng, d: usize, h: Nonlinearity) -> FlowLayer {
    let m = rng.random_range(1..d.min(4));
    let s = 0.6 / (m as f64).sqrt();
    loop {
        let a = DMatrix::from_fn(d, m, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let bm = DMatrix::from_fn(d, m, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let b = normal_vec(rng, m, 0.5);
        if let Ok(l) = Sylvester::new(a, bm, b, h.clone()) {
            return l.into();
        }
    }
}

pub fn random_radial(rng: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    let a = rng.random_range(0.5..2.0);
    let b = rng.random_range(-0.9 * a..2.0);
    Radial::new(a, b, normal_vec(rng, d, 1.0)).unwrap().into()
}

pub fn random_householder(rng: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    Householder::from_direction(&normal_vec(rng, d, 1.0)).unwrap().into()
}

/// ReLU planar or Sylvester layer with moderate weights.
pub fn random_relu_layer(rng: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    loop {
        let l: flowcap::Result<FlowLayer> = if d == 1 || rng.random_bool(0.5) {
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            Planar::new(u, w, rng.random_range(-0.5..0.5), Nonlinearity::Relu).map(Into::into)
        } else {
            let m = rng.random_range(1..d.min(4));
            let a = DMatrix::from_fn(d, m, |_, _| rng.random_range(-0.6..0.6));
            let b = DMatrix::from_fn(d, m, |_, _| rng.random_range(-0.6..0.6));
            let bias: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
            Sylvester::new(a, b, bias, Nonlinearity::Relu).map(Into::into)
        };
        if let Ok(l) = l {
            return l;
        }
    }
}

/// kind: 0 ReLU planar, 1 smooth planar, 2 ReLU Sylvester, 3 smooth
/// Sylvester, 4 radial, 5 Householder.
pub fn random_layer(rng: &mut ChaCha8Rng, d: usize, kind: u8) -> FlowLayer {
    match kind {
        0 => random_planar(rng, d, Nonlinearity::Relu),
        1 => {
            let h = smooth_h(rng);
            random_planar(rng, d, h)
        }
        2 => random_sylvester(rng, d, Nonlinearity::Relu),
        3 => {
            let h = smooth_h(rng);
            random_sylvester(rng, d, h)
        }
        4 => random_radial(rng, d),
        _ => random_householder(rng, d),
    }
}

/// Smooth layer kinds valid in dimension d.
pub fn smooth_kinds(d: usize) -> Vec<u8> {
    if d > 1 {
        vec![1, 3, 4, 5]
    } else {
        vec![1, 4, 5]
    }
}

/// Three-component mixture with distinct, correlated covariances.
pub fn mog(d: usize) -> MixtureGaussianD {
    let comp = |shift: f64, s: f64, rho: f64| {
        let cov = DMatrix::from_fn(d, d, |i, j| if i == j { s } else { rho * s });
        let mean: Vec<f64> = (0..d).map(|i| shift * if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        GaussianD::from_slices(&mean, cov).unwrap()
    };
    MixtureGaussianD::new(vec![0.5, 0.3, 0.2], vec![comp(-1.0, 1.0, 0.3), comp(1.5, 0.6, -0.2), comp(0.0, 1.8, 0.1)]).unwrap()
}

/// Random tail-consistent piecewise Gaussian with n pieces: piece k is
/// chosen so its CDF at t_k equals the mass to the left of t_k.
pub fn random_tail_consistent(rng: &mut ChaCha8Rng, n: usize) -> PiecewiseGaussian1D {
    let mut t: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let mut pieces = vec![Gaussian1D::new(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)).unwrap()];
    let mut acc = 0.0;
    for k in 1..=t.len() {
        let prev = pieces[k - 1];
        let a = if k == 1 { f64::NEG_INFINITY } else { t[k - 2] };
        acc += prev.mass(a, t[k - 1]);
        let s = rng.random_range(0.3..3.0);
        pieces.push(Gaussian1D::new(t[k - 1] - norm_quantile(acc) * s, s).unwrap());
    }
    PiecewiseGaussian1D::new(t, pieces).unwrap()
}

/// f#base as a density, for grid metrics.
#[derive(Debug)]
pub struct Push<B: Density> {
    pub f: FlowStack,
    pub base: B,
}

impl<B: Density> Density for Push<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn log_density_unchecked(&self, y: &[f64]) -> flowcap::Result<f64> {
        self.f.pushforward_log_density(&self.base, y)
    }
    fn grad_log_density_unchecked(&self, y: &[f64]) -> flowcap::Result<Vec<f64>> {
        self.f.pushforward_grad_log_density(&self.base, y)
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        self.base.location_scale()
    }
    fn name(&self) -> String {
        "pushforward".into()
    }
}
