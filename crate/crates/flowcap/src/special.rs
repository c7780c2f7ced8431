//! Scalar special functions: standard-normal CDF/quantile, log-space
//! incomplete gamma, Gauss–Legendre rules and small numeric helpers.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

pub use statrs::function::gamma::ln_gamma;

/// ln √(2π)
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_logpdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate deep in the right tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / SQRT_2)
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated on whichever tail keeps precision.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

// Acklam's rational approximation, lower region p <= 0.5.
fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549671010605910e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

fn quantile_lower(p: f64) -> f64 {
    let mut x = acklam_lower(p);
    // Halley refinement against the erfc-based CDF.
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e / norm_pdf(x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Standard-normal quantile Φ⁻¹(p); ±∞ at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        quantile_lower(p)
    } else {
        -quantile_lower(1.0 - p)
    }
}

/// Inverse survival function: x with 1 − Φ(x) = q, precise for tiny q.
pub fn norm_isf(q: f64) -> f64 {
    -norm_quantile(q)
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// ln(e^a + e^b)
pub fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 200_000;

// Series: P(a,x) = e^{-x} x^a / Γ(a+1) · Σ x^n / ((a+1)…(a+n)).
fn ln_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    while n < MAX_ITER as f64 {
        term *= x / (a + n);
        sum += term;
        if term < sum * EPS {
            break;
        }
        n += 1.0;
    }
    -x + a * x.ln() - ln_gamma(a + 1.0) + sum.ln()
}

// Modified Lentz continued fraction for Q(a,x), x >= a+1.
fn ln_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    -x + a * x.ln() - ln_gamma(a) + h.ln()
}

/// ln P(a, x), the log of the regularized lower incomplete gamma function.
pub fn ln_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "ln_gamma_p requires a > 0");
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < a + 1.0 {
        ln_p_series(a, x)
    } else {
        (-ln_q_cf(a, x).exp()).ln_1p()
    }
}

/// ln Q(a, x), the log of the regularized upper incomplete gamma function.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "ln_gamma_q requires a > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        (-ln_p_series(a, x).exp()).ln_1p()
    } else {
        ln_q_cf(a, x)
    }
}

/// Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                if n == 1 {
                    p1 = x;
                    p0 = 1.0;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            if n == 1 {
                x = 0.0;
                dp = 1.0;
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n == 1 {
            weights[0] = 2.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_panels(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + h * k as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

/// Shared 20-point rule.
pub fn gl20() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(20))
}

/// Monotone scalar root on a bracket [lo, hi] with g(lo) <= 0 <= g(hi);
/// Newton steps guarded by bisection.
pub fn monotone_root(
    mut g: impl FnMut(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Option<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let (v, dv) = g(x);
        if v == 0.0 {
            return Some(x);
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - v / dv;
        let next = if dv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol * (1.0 + x.abs()) || hi - lo <= tol * (1.0 + x.abs()) {
            return Some(next);
        }
        x = next;
    }
    None
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.001, 0.1, 0.3, 0.5, 0.77, 0.999] {
            let x = norm_quantile(p);
            let back = if p < 0.5 { norm_cdf(x) } else { norm_cdf(x) };
            assert!(((back - p) / p).abs() < 1e-13, "p={p} x={x} back={back}");
        }
        assert!((norm_isf(1e-30) - 11.464_024_688_443_613).abs() < 1e-9);
    }

    #[test]
    fn incomplete_gamma_known_values() {
        // P(1, x) = 1 - e^{-x}
        assert!((ln_gamma_p(1.0, 2.0).exp() - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert!((ln_gamma_q(1.0, 0.5).exp() - (-0.5f64).exp()).abs() < 1e-14);
        // P(3, 2) = 1 - e^{-2}(1 + 2 + 2)
        let p = 1.0 - (-2.0f64).exp() * 5.0;
        assert!((ln_gamma_p(3.0, 2.0).exp() - p).abs() < 1e-14);
        assert!((ln_gamma_q(3.0, 6.0).exp() - (-6.0f64).exp() * (1.0 + 6.0 + 18.0)).abs() < 1e-14);
        // Huge shape stays finite in log space.
        assert!(ln_gamma_p(2048.0, 32.0).is_finite());
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let r = GaussLegendre::new(7);
        let v = r.integrate(-1.0, 2.0, |x| x.powi(13) - 3.0 * x.powi(4));
        let exact = (2f64.powi(14) - 1.0) / 14.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
    }
}
