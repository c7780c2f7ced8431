//! ℓ1 / total-variation estimators and numerical sanity checks.

use crate::densities::{grad_log_density, log_density, pdf1, sample, Density, StudentT};
use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::linalg::norm;
use rayon::prelude::*;
use serde::Serialize;

/// Points of the default 1D grid.
pub const DEFAULT_GRID_POINTS: usize = (1 << 14) + 1;
/// Half-width of default windows in units of the densities' scale.
pub const DEFAULT_WINDOW_SCALES: f64 = 12.0;
/// Mass allowed outside a grid window.
pub const COVERAGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Method {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Estimate {
    pub value: f64,
    pub method: L1Method,
    pub stderr: Option<f64>,
    pub grid_spec: Option<(f64, f64, usize)>,
    /// |value − value at half resolution| for grid estimates.
    pub refinement_delta: Option<f64>,
    /// Total variation, value/2.
    pub tv: f64,
}

fn grid_cells(lo: f64, hi: f64, n: usize, extra: &[f64]) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    xs.extend(extra.iter().cloned().filter(|&t| t > lo && t < hi));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Trapezoid of f over cells, sampling one-sided values just inside each
/// cell so jumps at breakpoints are integrated correctly.
fn trapezoid_inside(xs: &[f64], f: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    xs.par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            // at least one ulp inside, or the sample can land on the breakpoint
            let xa = (a + 1e-10 * (b - a)).max(a.next_up());
            let xb = (b - 1e-10 * (b - a)).min(b.next_down());
            0.5 * (b - a) * (f(xa) + f(xb))
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn outside_mass(d: &dyn Density, lo: f64, hi: f64) -> Option<(f64, f64)> {
    Some((d.cdf(lo).ok()?, d.sf(hi).ok()?))
}

/// ∫_lo^hi |p − q| by trapezoid on a uniform grid merged with breakpoints.
pub fn l1_grid_window(p: &dyn Density, q: &dyn Density, lo: f64, hi: f64, n: usize) -> f64 {
    let mut bps = p.breakpoints();
    bps.extend(q.breakpoints());
    trapezoid_inside(&grid_cells(lo, hi, n, &bps), &|x: f64| (pdf1(p, x) - pdf1(q, x)).abs())
}

/// ‖p − q‖₁ by composite trapezoid on [lo, hi] (merged with both
/// densities' breakpoints) plus the tail remainder from the CDFs.
pub fn l1_grid_1d(p: &dyn Density, q: &dyn Density, lo: f64, hi: f64, n: usize) -> Result<L1Estimate> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: p.dim().max(q.dim()) });
    }
    if n < 1001 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::contract(format!("l1_grid_1d needs finite lo < hi and n ≥ 1001, got [{lo}, {hi}], n={n}")));
    }
    let mut tail = 0.0;
    match (outside_mass(p, lo, hi), outside_mass(q, lo, hi)) {
        (Some((pl, pr)), Some((ql, qr))) => {
            let worst = pl.max(pr).max(ql).max(qr);
            if worst > COVERAGE_TOL {
                return Err(Error::Coverage { tail_mass: pl + pr + ql + qr });
            }
            // |p − q| integrates to at least |P − Q| and at most P + Q outside;
            // the difference is below the coverage tolerance, take the lower.
            tail = (pl - ql).abs() + (pr - qr).abs();
        }
        _ => {}
    }
    let mut bps = p.breakpoints();
    bps.extend(q.breakpoints());
    let f = |x: f64| (pdf1(p, x) - pdf1(q, x)).abs();
    let fine = trapezoid_inside(&grid_cells(lo, hi, n, &bps), &f) + tail;
    let coarse = trapezoid_inside(&grid_cells(lo, hi, n.div_ceil(2), &bps), &f) + tail;
    Ok(L1Estimate {
        value: fine,
        method: L1Method::Grid,
        stderr: None,
        grid_spec: Some((lo, hi, n)),
        refinement_delta: Some((fine - coarse).abs()),
        tv: 0.5 * fine,
    })
}

/// Window covering ±12 scales of both densities and their breakpoints.
pub fn default_window(p: &dyn Density, q: &dyn Density) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in [p, q] {
        let (loc, s) = d.location_scale();
        lo = lo.min(loc[0] - DEFAULT_WINDOW_SCALES * s);
        hi = hi.max(loc[0] + DEFAULT_WINDOW_SCALES * s);
        for t in d.breakpoints() {
            lo = lo.min(t - 1.0);
            hi = hi.max(t + 1.0);
        }
    }
    (lo, hi)
}

/// l1_grid_1d on the default window with 2¹⁴+1 points.
pub fn l1_grid_1d_auto(p: &dyn Density, q: &dyn Density) -> Result<L1Estimate> {
    let (lo, hi) = default_window(p, q);
    l1_grid_1d(p, q, lo, hi, DEFAULT_GRID_POINTS)
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// ‖f#q − p‖₁ = E_{z∼q} | |det J_f(z)|·p(f(z))/q(z) − 1 |.
pub fn l1_pushforward_mc(f: &FlowStack, q: &dyn Density, p: &dyn Density, n: usize, seed: u64) -> Result<L1Estimate> {
    if n < 2 {
        return Err(Error::contract("l1_pushforward_mc needs n ≥ 2"));
    }
    let zs = sample(q, seed, n)?;
    let terms = zs
        .par_iter()
        .map(|z| {
            let (y, ld) = f.forward(z)?;
            let lq = log_density(q, z)?;
            if lq == f64::NEG_INFINITY {
                return Err(Error::contract("sampled point has zero base density"));
            }
            let lp = log_density(p, &y)?;
            Ok(((ld + lp - lq).exp() - 1.0).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, se) = mean_stderr(&terms);
    Ok(L1Estimate { value, method: L1Method::MonteCarlo, stderr: Some(se), grid_spec: None, refinement_delta: None, tv: 0.5 * value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Relative central-difference error of ∇log p at z, or None at
/// non-smooth points.
pub fn gradient_fd_error(
    logp: &dyn Fn(&[f64]) -> Result<f64>,
    grad: &[f64],
    z: &[f64],
    step: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let h = step * (1.0 + z[i].abs());
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += h;
        zm[i] -= h;
        let fd = (logp(&zp)? - logp(&zm)?) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / (1.0 + fd.abs()));
    }
    Ok(worst)
}

/// ∫ exp(logf) over ℝ^d: trapezoid for d ≤ 2, Student-t importance
/// sampling beyond. Returns (estimate, stderr).
fn integrate_density(logf: &(dyn Fn(&[f64]) -> f64 + Sync), d: usize, loc: &[f64], scale: f64, bps: &[f64], seed: u64) -> Result<(f64, f64)> {
    let w = DEFAULT_WINDOW_SCALES * scale;
    match d {
        1 => {
            let xs = grid_cells(loc[0] - w, loc[0] + w, DEFAULT_GRID_POINTS, bps);
            Ok((trapezoid_inside(&xs, &|x| logf(&[x]).exp()), 0.0))
        }
        2 => {
            let n = 1201;
            let h = 2.0 * w / (n - 1) as f64;
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = loc[0] - w + h * i as f64;
                    let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    (0..n)
                        .map(|j| {
                            let y = loc[1] - w + h * j as f64;
                            let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                            wi * wj * logf(&[x, y]).exp()
                        })
                        .sum::<f64>()
                })
                .sum();
            Ok((total * h * h, 0.0))
        }
        _ => {
            let prop = StudentT::new(loc.to_vec(), 2.0 * scale, 3.0)?;
            let n = 200_000;
            let zs = sample(&prop, seed, n)?;
            let ws: Vec<f64> = zs
                .par_iter()
                .map(|z| (logf(z) - prop.log_density_unchecked(z).unwrap_or(f64::NEG_INFINITY)).exp())
                .collect();
            Ok(mean_stderr(&ws))
        }
    }
}

fn entry(name: &str, measured: f64, threshold: f64, note: impl Into<String>) -> CheckEntry {
    CheckEntry { name: name.into(), passed: measured <= threshold, measured, threshold, note: note.into() }
}

/// Normalization, gradient, inversion and (with a flow) pushforward
/// normalization checks. Failures are report entries, never errors.
pub fn check_suite(dist: &dyn Density, f: Option<&FlowStack>, seed: u64) -> CheckReport {
    let d = dist.dim();
    let (loc, scale) = dist.location_scale();
    let mut entries = Vec::new();
    let bps = if d == 1 { dist.breakpoints() } else { vec![] };

    let logp = |z: &[f64]| dist.log_density_unchecked(z).unwrap_or(f64::NEG_INFINITY);
    match integrate_density(&logp, d, &loc, scale, &bps, seed) {
        Ok((mass, se)) => entries.push(entry("normalization", (mass - 1.0).abs(), 1e-4 + 3.0 * se, format!("integral = {mass}"))),
        Err(e) => entries.push(CheckEntry { name: "normalization".into(), passed: false, measured: f64::NAN, threshold: 0.0, note: e.to_string() }),
    }

    let pts = sample(dist, seed ^ 0x9e37_79b9, 100).unwrap_or_else(|_| vec![loc.clone()]);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for z in &pts {
        let lp = |x: &[f64]| log_density(dist, x);
        match grad_log_density(dist, z).and_then(|g| gradient_fd_error(&lp, &g, z, 1e-6)) {
            Ok(e) => worst = worst.max(e),
            Err(_) => skipped += 1,
        }
    }
    entries.push(entry("gradient", worst, 1e-5, format!("{} points, {skipped} non-smooth/unsupported skipped", pts.len())));

    if d == 1 && dist.cdf(loc[0]).is_ok() {
        let mut worst: f64 = 0.0;
        for z in &pts {
            let u = dist.cdf(z[0]).unwrap_or(f64::NAN);
            if u > 1e-12 && u < 1.0 - 1e-12 {
                let x = dist.quantile(u).unwrap_or(f64::NAN);
                worst = worst.max((x - z[0]).abs() / (1.0 + z[0].abs()));
            }
        }
        entries.push(entry("quantile_round_trip", worst, 1e-8, "quantile(cdf(x)) vs x"));
    }

    if let Some(f) = f {
        let mut worst: f64 = 0.0;
        for z in &pts {
            let r = f.forward(z).and_then(|(y, _)| f.inverse(&y));
            match r {
                Ok(back) => {
                    let err: Vec<f64> = back.iter().zip(z).map(|(a, b)| a - b).collect();
                    worst = worst.max(norm(&err) / (1.0 + norm(z)));
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
        entries.push(entry("flow_round_trip", worst, 1e-9, "inverse(forward(z)) vs z"));
        // The image window is approximated by pushing the base window's centre.
        let loc_y = f.forward(&loc).map(|(y, _)| y).unwrap_or(loc.clone());
        let spread = pts
            .iter()
            .filter_map(|z| f.forward(z).ok())
            .map(|(y, _)| norm(&y.iter().zip(&loc_y).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(scale, f64::max);
        let logq = |y: &[f64]| f.pushforward_log_density(dist, y).unwrap_or(f64::NEG_INFINITY);
        let ybps: Vec<f64> = bps.iter().filter_map(|&t| f.forward(&[t]).ok().map(|(y, _)| y[0])).collect();
        match integrate_density(&logq, d, &loc_y, spread, &ybps, seed ^ 0x51) {
            Ok((mass, se)) => entries.push(entry("pushforward_normalization", (mass - 1.0).abs(), 1e-4 + 3.0 * se, format!("integral = {mass}"))),
            Err(e) => entries.push(CheckEntry { name: "pushforward_normalization".into(), passed: false, measured: f64::NAN, threshold: 0.0, note: e.to_string() }),
        }
    }
    CheckReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{Gaussian1D, GaussianD};
    use crate::special::norm_cdf;

    #[test]
    fn shifted_gaussians_match_analytic() {
        let p = Gaussian1D::standard();
        let q = Gaussian1D::new(1.0, 1.0).unwrap();
        let est = l1_grid_1d_auto(&p, &q).unwrap();
        let exact = 2.0 * (2.0 * norm_cdf(0.5) - 1.0);
        // kink of |p − q| at 0.5 falls between grid nodes
        assert!((est.value - exact).abs() < 1e-6, "{} vs {exact}", est.value);
        assert!((est.tv - 0.38292).abs() < 1e-5);
        assert_eq!(est.tv, est.value / 2.0);
        assert!(est.refinement_delta.unwrap() < 1e-4);
    }

    #[test]
    fn identical_densities_give_zero() {
        let p = Gaussian1D::new(0.3, 2.0).unwrap();
        assert_eq!(l1_grid_1d_auto(&p, &p).unwrap().value, 0.0);
        let g = GaussianD::standard(3);
        let est = l1_pushforward_mc(&FlowStack::identity(), &g, &g, 1000, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn narrow_window_is_a_coverage_error() {
        let p = Gaussian1D::standard();
        assert!(matches!(l1_grid_1d(&p, &p, -2.0, 2.0, 2001), Err(Error::Coverage { .. })));
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let p = Gaussian1D::standard();
        let q = Gaussian1D::new(0.5, 1.2).unwrap();
        let a = l1_pushforward_mc(&FlowStack::identity(), &q, &p, 5000, 7).unwrap();
        let b = l1_pushforward_mc(&FlowStack::identity(), &q, &p, 5000, 7).unwrap();
        assert_eq!(a, b);
        let g = l1_grid_1d_auto(&p, &q).unwrap();
        assert!((a.value - g.value).abs() < 3.0 * a.stderr.unwrap());
    }

    #[test]
    fn standard_gaussian_suite_passes() {
        let r = check_suite(&GaussianD::standard(2), None, 3);
        assert!(r.all_passed(), "{r:?}");
        let r = check_suite(&Gaussian1D::standard(), None, 3);
        assert!(r.all_passed(), "{r:?}");
    }

    #[derive(Debug)]
    struct Scaled(Gaussian1D);
    impl Density for Scaled {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
            Ok(self.0.logpdf(z[0]) + 1.1f64.ln())
        }
        fn grad_log_density_unchecked(&self, z: &[f64]) -> Result<Vec<f64>> {
            self.0.grad_log_density_unchecked(z)
        }
        fn location_scale(&self) -> (Vec<f64>, f64) {
            (vec![0.0], 1.0)
        }
        fn name(&self) -> String {
            "scaled".into()
        }
    }

    #[test]
    fn unnormalized_density_is_flagged() {
        let r = check_suite(&Scaled(Gaussian1D::standard()), None, 1);
        let e = r.get("normalization").unwrap();
        assert!(!e.passed);
        assert!((e.measured - 0.1).abs() < 1e-6);
    }
}
