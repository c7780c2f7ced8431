use super::spec::DistSpec;
use super::{check_unit, Density, Gaussian1D, TAIL_CONSISTENCY_TOL};
use crate::error::{Error, Result};
use crate::special::{norm_isf, norm_quantile};
use rand::{Rng, RngCore};

fn strictly_increasing(t: &[f64]) -> bool {
    t.windows(2).all(|w| w[0] < w[1]) && t.iter().all(|x| x.is_finite())
}

/// Piece i lives on [t_i, t_{i+1}) with t_0 = −∞ and t_n = +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseGaussian1D {
    breakpoints: Vec<f64>,
    pieces: Vec<Gaussian1D>,
    masses: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl PiecewiseGaussian1D {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Gaussian1D>) -> Result<Self> {
        if pieces.is_empty() || breakpoints.len() + 1 != pieces.len() {
            return Err(Error::contract("need n pieces and n-1 breakpoints"));
        }
        if !strictly_increasing(&breakpoints) {
            return Err(Error::contract("breakpoints must be finite and strictly increasing"));
        }
        let n = pieces.len();
        let masses: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = bounds(&breakpoints, i);
                pieces[i].mass(a, b)
            })
            .collect();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + masses[i];
        }
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + masses[i];
        }
        Ok(PiecewiseGaussian1D { breakpoints, pieces, masses, prefix, suffix })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    pub fn pieces(&self) -> &[Gaussian1D] {
        &self.pieces
    }
    pub fn n_pieces(&self) -> usize {
        self.pieces.len()
    }
    /// Mass of piece i on its own interval.
    pub fn piece_mass(&self, i: usize) -> f64 {
        self.masses[i]
    }
    /// Total mass of pieces 0..i on their intervals (F at t_i).
    pub fn mass_before(&self, i: usize) -> f64 {
        self.prefix[i]
    }

    /// Index of the piece whose interval contains x (right-open intervals).
    pub fn piece_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&t| t <= x)
    }

    /// Residuals of the tail-consistency equalities for k = 1..n−1:
    /// Σ_{i<k} ∫_{t_i}^{t_{i+1}} p_i + ∫_{t_k}^∞ p_k − 1.
    pub fn tail_consistency_residuals(&self) -> Vec<f64> {
        (1..self.pieces.len())
            .map(|k| {
                let tk = self.breakpoints[k - 1];
                self.prefix[k] + self.pieces[k].sf_at(tk) - 1.0
            })
            .collect()
    }

    pub fn tail_consistent(&self) -> bool {
        self.tail_consistency_residuals()
            .iter()
            .all(|r| r.abs() <= TAIL_CONSISTENCY_TOL)
    }

    pub fn total_mass(&self) -> f64 {
        self.prefix[self.pieces.len()]
    }

    fn on_breakpoint(&self, x: f64) -> bool {
        self.breakpoints.iter().any(|&t| (x - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }
}

fn bounds(t: &[f64], i: usize) -> (f64, f64) {
    let a = if i == 0 { f64::NEG_INFINITY } else { t[i - 1] };
    let b = if i == t.len() { f64::INFINITY } else { t[i] };
    (a, b)
}

impl Density for PiecewiseGaussian1D {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.pieces[self.piece_index(z[0])].logpdf(z[0]))
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.on_breakpoint(z[0]) {
            return Err(Error::NonSmooth(format!("{} is a piecewise-Gaussian breakpoint", z[0])));
        }
        self.pieces[self.piece_index(z[0])].grad_log_density_unchecked(z)
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        let i = self.piece_index(x);
        let (a, _) = bounds(&self.breakpoints, i);
        Ok((self.prefix[i] + self.pieces[i].mass(a, x)).clamp(0.0, 1.0))
    }
    fn sf(&self, x: f64) -> Result<f64> {
        let i = self.piece_index(x);
        let (_, b) = bounds(&self.breakpoints, i);
        Ok((self.suffix[i + 1] + self.pieces[i].mass(x, b)).clamp(0.0, 1.0))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        // Piece whose cumulative range contains u, then invert inside it.
        let n = self.pieces.len();
        let mut i = self.prefix[1..].partition_point(|&c| c < u).min(n - 1);
        while i + 1 < n && self.masses[i] <= 0.0 {
            i += 1;
        }
        let (a, b) = bounds(&self.breakpoints, i);
        let g = &self.pieces[i];
        let rem = u - self.prefix[i];
        let lo_cdf = g.cdf_at(a);
        let x = if lo_cdf + rem <= 0.5 {
            g.mu + g.sigma * norm_quantile(lo_cdf + rem)
        } else {
            // Upper tail of the piece: 1 − Φ(x) = sf(a) − rem.
            g.mu + g.sigma * norm_isf((g.sf_at(a) - rem).max(f64::MIN_POSITIVE))
        };
        Ok(x.clamp(a, b))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        let lo = self.breakpoints.first().cloned().unwrap_or(self.pieces[0].mu);
        let hi = self.breakpoints.last().cloned().unwrap_or(self.pieces[0].mu);
        let s = self.pieces.iter().map(|p| p.sigma).fold(0.0, f64::max);
        (vec![0.5 * (lo + hi)], s.max(0.5 * (hi - lo)))
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
        format!("PiecewiseGaussian1D(n={})", self.pieces.len())
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::PiecewiseGaussian {
            breakpoints: self.breakpoints.clone(),
            mu: self.pieces.iter().map(|p| p.mu).collect(),
            sigma: self.pieces.iter().map(|p| p.sigma).collect(),
        })
    }
}

/// Density values[i] on [t_i, t_{i+1}); zero outside [t_0, t_m).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant1D {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseConstant1D {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let pc = Self::build(breakpoints, values)?;
        let total = pc.cum[pc.values.len()];
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("piecewise-constant integral is {total}, not 1")));
        }
        Ok(pc)
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let pc = Self::build(breakpoints, values)?;
        let total = pc.cum[pc.values.len()];
        if !(total > 0.0) {
            return Err(Error::contract("piecewise-constant function has zero mass"));
        }
        let v = pc.values.iter().map(|x| x / total).collect();
        Self::build(pc.breakpoints, v)
    }

    fn build(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::contract("need m values and m+1 breakpoints"));
        }
        if !strictly_increasing(&breakpoints) {
            return Err(Error::contract("breakpoints must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::contract("values must be finite and nonnegative"));
        }
        let mut cum = vec![0.0; values.len() + 1];
        for i in 0..values.len() {
            cum[i + 1] = cum[i] + values[i] * (breakpoints[i + 1] - breakpoints[i]);
        }
        Ok(PiecewiseConstant1D { breakpoints, values, cum })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![1.0 / (b - a)])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
    pub fn hull(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let (a, b) = self.hull();
        if x < a || x >= b {
            return 0.0;
        }
        self.values[self.breakpoints.partition_point(|&t| t <= x) - 1]
    }
}

impl Density for PiecewiseConstant1D {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.value_at(z[0]).ln())
    }
    fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = z[0];
        if self.breakpoints.iter().any(|&t| (x - t).abs() <= 1e-12 * (1.0 + t.abs())) {
            return Err(Error::NonSmooth(format!("{x} is a piecewise-constant breakpoint")));
        }
        if self.value_at(x) == 0.0 {
            return Err(Error::NonSmooth(format!("density vanishes at {x}")));
        }
        Ok(vec![0.0])
    }
    fn cdf(&self, x: f64) -> Result<f64> {
        let (a, b) = self.hull();
        if x <= a {
            return Ok(0.0);
        }
        if x >= b {
            return Ok(1.0);
        }
        let i = self.breakpoints.partition_point(|&t| t <= x) - 1;
        Ok((self.cum[i] + self.values[i] * (x - self.breakpoints[i])).min(1.0))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        let m = self.values.len();
        for j in 0..m {
            if self.values[j] > 0.0 && self.cum[j + 1] >= u {
                let x = self.breakpoints[j] + (u - self.cum[j]).max(0.0) / self.values[j];
                return Ok(x.min(self.breakpoints[j + 1]));
            }
        }
        Ok(self.hull().1)
    }
    fn support(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            match out.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => out.push((a, b)),
            }
        }
        out
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        let (a, b) = self.hull();
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
        format!("PiecewiseConstant1D(m={})", self.values.len())
    }
    fn to_spec(&self) -> Option<DistSpec> {
        Some(DistSpec::PiecewiseConstant {
            breakpoints: self.breakpoints.clone(),
            values: self.values.clone(),
        })
    }
}
