use crate::densities::{pdf1, Density, DynDensity};
use crate::error::{Error, Result};
use crate::flows::{CustomSmooth, Nonlinearity, Planar};
use std::sync::Arc;

/// Tolerance on the matched cumulative masses at interval ends.
pub const MASS_MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// Φ_p⁻¹∘Φ_q, clamped to the matching support interval of p
    CdfMatch { p_lo: f64, p_hi: f64 },
    /// x ↦ slope·x + offset
    Affine { slope: f64, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// domain interval in q-space
    pub lo: f64,
    pub hi: f64,
    pub kind: SegmentKind,
}

/// Increasing continuous map ℝ → ℝ with f#q = p.
#[derive(Debug, Clone)]
pub struct TransportMap1D {
    q: DynDensity,
    p: DynDensity,
    segments: Vec<Segment>,
    // image of each segment's lower end
    image_lo: Vec<f64>,
}

fn affine(lo: f64, hi: f64, from: (f64, f64), to: (f64, f64)) -> Segment {
    let slope = if from.1 > from.0 { (to.1 - to.0) / (from.1 - from.0) } else { 1.0 };
    Segment { lo, hi, kind: SegmentKind::Affine { slope, offset: to.0 - slope * from.0 } }
}

/// Monotone transport q → p: CDF matching on support intervals, affine maps
/// across gaps, unit-slope shifts on the outer tails.
pub fn cdf_transport(q: DynDensity, p: DynDensity) -> Result<TransportMap1D> {
    if q.dim() != 1 || p.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: q.dim().max(p.dim()) });
    }
    let sq = q.support();
    let sp = p.support();
    if sq.len() != sp.len() {
        return Err(Error::hypothesis(format!(
            "q has {} support intervals, p has {}",
            sq.len(),
            sp.len()
        )));
    }
    for (i, (iq, ip)) in sq.iter().zip(&sp).enumerate() {
        let (fq, fp) = (q.cdf(iq.1)?, p.cdf(ip.1)?);
        if (fq - fp).abs() > MASS_MATCH_TOL {
            return Err(Error::hypothesis(format!(
                "cumulative masses differ at the end of interval {i}: {fq} vs {fp}"
            )));
        }
    }
    let n = sq.len();
    let mut segments = Vec::new();
    if sq[0].0 > f64::NEG_INFINITY {
        segments.push(affine(f64::NEG_INFINITY, sq[0].0, (sq[0].0, sq[0].0 + 1.0), (sp[0].0, sp[0].0 + 1.0)));
    }
    for i in 0..n {
        segments.push(Segment { lo: sq[i].0, hi: sq[i].1, kind: SegmentKind::CdfMatch { p_lo: sp[i].0, p_hi: sp[i].1 } });
        if i + 1 < n {
            segments.push(affine(sq[i].1, sq[i + 1].0, (sq[i].1, sq[i + 1].0), (sp[i].1, sp[i + 1].0)));
        }
    }
    if sq[n - 1].1 < f64::INFINITY {
        let (a, b) = (sq[n - 1].1, sp[n - 1].1);
        segments.push(affine(a, f64::INFINITY, (a, a + 1.0), (b, b + 1.0)));
    }
    let mut map = TransportMap1D { q, p, segments, image_lo: Vec::new() };
    map.image_lo = map.segments.iter().map(|s| map.eval_in(s, s.lo)).collect::<Result<_>>()?;
    Ok(map)
}

impl TransportMap1D {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
    /// Segment boundaries in q-space.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.lo).collect()
    }
    pub fn source(&self) -> &DynDensity {
        &self.q
    }
    pub fn target(&self) -> &DynDensity {
        &self.p
    }

    fn cdf_match(&self, x: f64) -> Result<f64> {
        if x == f64::NEG_INFINITY || x == f64::INFINITY {
            return Ok(x);
        }
        let u = self.q.cdf(x)?;
        if u <= 0.5 {
            if u <= 0.0 {
                return Ok(self.p.support()[0].0.max(f64::MIN));
            }
            self.p.quantile(u)
        } else {
            let s = self.q.sf(x)?;
            if s <= 0.0 {
                return Ok(self.p.support().last().unwrap().1.min(f64::MAX));
            }
            self.p.isf(s)
        }
    }

    fn eval_in(&self, s: &Segment, x: f64) -> Result<f64> {
        match s.kind {
            SegmentKind::Affine { slope, offset } => Ok(if x.is_infinite() { x } else { slope * x + offset }),
            SegmentKind::CdfMatch { p_lo, p_hi } => Ok(self.cdf_match(x)?.clamp(p_lo, p_hi)),
        }
    }

    fn segment_of(&self, x: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.lo <= x).saturating_sub(1);
        &self.segments[i]
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.eval_in(self.segment_of(x), x)
    }

    /// f'(x): q(x)/p(f(x)) on CDF segments, the slope elsewhere.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        match self.segment_of(x).kind {
            SegmentKind::Affine { slope, .. } => Ok(slope),
            SegmentKind::CdfMatch { .. } => {
                let y = self.eval(x)?;
                Ok(pdf1(self.q.as_ref(), x) / pdf1(self.p.as_ref(), y))
            }
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        let i = self.image_lo.partition_point(|&v| v <= y).saturating_sub(1);
        let s = &self.segments[i];
        match s.kind {
            SegmentKind::Affine { slope, offset } => Ok((y - offset) / slope),
            SegmentKind::CdfMatch { .. } => {
                let u = self.p.cdf(y)?;
                let x = if u <= 0.5 {
                    self.q.quantile(u.max(f64::MIN_POSITIVE))?
                } else {
                    self.q.isf(self.p.sf(y)?.max(f64::MIN_POSITIVE))?
                };
                Ok(x.clamp(s.lo, s.hi))
            }
        }
    }

    /// The same map as a single planar layer z + h(z) (u = w = 1, b = 0)
    /// with the lookup nonlinearity h(z) = f(z) − z. h'' is numeric.
    pub fn as_planar_layer(self: &Arc<Self>) -> Result<Planar> {
        let lo_q = self.q.quantile(1e-9)?;
        let hi_q = self.q.quantile(1.0 - 1e-9)?;
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for k in 0..=4096 {
            let x = lo_q + (hi_q - lo_q) * k as f64 / 4096.0;
            let d = self.derivative(x)? - 1.0;
            if d.is_finite() {
                dmin = dmin.min(d);
                dmax = dmax.max(d);
            }
        }
        // outer shifts have slope 1
        dmin = dmin.min(0.0);
        dmax = dmax.max(0.0);
        let (m1, m2, m3) = (self.clone(), self.clone(), self.clone());
        let h = CustomSmooth {
            name: "cdf_transport".into(),
            h: Arc::new(move |z| m1.eval(z).unwrap_or(f64::NAN) - z),
            dh: Arc::new(move |z| m2.derivative(z).unwrap_or(f64::NAN) - 1.0),
            d2h: Arc::new(move |z| {
                let e = 1e-5 * (1.0 + z.abs());
                (m3.derivative(z + e).unwrap_or(f64::NAN) - m3.derivative(z - e).unwrap_or(f64::NAN)) / (2.0 * e)
            }),
            dh_range: (dmin.max(-1.0 + 1e-6), dmax),
            c_h: None,
        };
        Planar::new(vec![1.0], vec![1.0], 0.0, Nonlinearity::custom(h)?)
    }
}

/// Density of f#q computed from the map alone: q(f⁻¹(y))/f'(f⁻¹(y)),
/// with f' by central differences of f.
#[derive(Debug, Clone)]
pub struct TransportPushforward {
    pub map: Arc<TransportMap1D>,
}

impl TransportPushforward {
    pub fn pdf_at(&self, y: f64) -> f64 {
        let Ok(x) = self.map.inverse(y) else { return 0.0 };
        let h = 1e-6 * (1.0 + x.abs());
        let bps = self.map.breakpoints();
        // one-sided difference next to segment boundaries
        let (a, b) = if bps.iter().any(|&t| (t - x).abs() < h) {
            if bps.iter().any(|&t| t > x && t - x < h) { (x - h, x) } else { (x, x + h) }
        } else {
            (x - h, x + h)
        };
        match (self.map.eval(a), self.map.eval(b)) {
            (Ok(fa), Ok(fb)) if fb > fa => pdf1(self.map.q.as_ref(), x) * (b - a) / (fb - fa),
            _ => 0.0,
        }
    }
}

impl Density for TransportPushforward {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        Ok(self.pdf_at(z[0]).ln())
    }
    fn grad_log_density_unchecked(&self, _z: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("gradient of a numeric transport pushforward".into()))
    }
    fn cdf(&self, y: f64) -> Result<f64> {
        self.map.q.cdf(self.map.inverse(y)?)
    }
    fn sf(&self, y: f64) -> Result<f64> {
        self.map.q.sf(self.map.inverse(y)?)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut v = self.map.p.breakpoints();
        v.extend(self.map.image_lo.iter().skip(1).cloned());
        v
    }
    fn location_scale(&self) -> (Vec<f64>, f64) {
        self.map.p.location_scale()
    }
    fn name(&self) -> String {
        format!("TransportPushforward({})", self.map.q.name())
    }
}
