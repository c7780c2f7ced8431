use crate::densities::{Gaussian1D, PiecewiseGaussian1D};
use crate::error::{Error, Result};
use crate::flows::{FlowLayer, FlowStack, Nonlinearity, Planar};

/// Absolute tolerance on the tail-mass match required by relu_piece_fix.
pub const PIECE_FIX_TOL: f64 = 1e-9;

/// One 1D ReLU planar layer z + u·relu(w(z − t)) that rescales the last
/// piece of `q` about its breakpoint t into `target_last`, leaving every
/// other piece unchanged.
pub fn relu_piece_fix(q: &PiecewiseGaussian1D, target_last: Gaussian1D) -> Result<FlowLayer> {
    let n = q.n_pieces();
    if n < 2 {
        return Err(Error::contract("relu_piece_fix needs at least two pieces"));
    }
    let t = q.breakpoints()[n - 2];
    let last = q.pieces()[n - 1];
    let (have, want) = (last.sf_at(t), target_last.sf_at(t));
    if (have - want).abs() > PIECE_FIX_TOL {
        return Err(Error::hypothesis(format!(
            "tail mass beyond t = {t} differs: current {have}, target {want}"
        )));
    }
    let ratio = target_last.sigma / last.sigma;
    let u = if ratio >= 1.0 { 1.0 } else { -1.0 };
    let w = (1.0 - ratio).abs();
    Ok(Planar::new(vec![u], vec![w], -w * t, Nonlinearity::Relu)?.into())
}

/// Exact image of a piecewise Gaussian under a 1D ReLU planar layer whose
/// hinge t = −b/w is the last breakpoint (or a w = 0 identity layer).
pub fn push_piecewise(q: &PiecewiseGaussian1D, layer: &FlowLayer) -> Result<PiecewiseGaussian1D> {
    let FlowLayer::Planar(p) = layer else {
        return Err(Error::WrongFamily("push_piecewise takes a 1D ReLU planar layer".into()));
    };
    if !p.h().is_relu() || p.u().len() != 1 {
        return Err(Error::WrongFamily("push_piecewise takes a 1D ReLU planar layer".into()));
    }
    let (u, w) = (p.u()[0], p.w()[0]);
    if w == 0.0 {
        return Ok(q.clone());
    }
    let n = q.n_pieces();
    let t = -p.b() / w;
    if n < 2 || w < 0.0 || (t - q.breakpoints()[n - 2]).abs() > 1e-12 * (1.0 + t.abs()) {
        return Err(Error::contract("layer hinge must sit on the last breakpoint with w > 0"));
    }
    let k = 1.0 + u * w;
    let last = q.pieces()[n - 1];
    let mut pieces = q.pieces().to_vec();
    pieces[n - 1] = Gaussian1D::new(t + k * (last.mu - t), k * last.sigma)?;
    PiecewiseGaussian1D::new(q.breakpoints().to_vec(), pieces)
}

#[derive(Debug, Clone)]
pub struct PwgSynthesis {
    pub base: Gaussian1D,
    pub stack: FlowStack,
    /// Layers with w = 0 (σ̂ = σ_n), kept in the stack.
    pub identity_layers: usize,
    /// Analytic intermediate distributions after each layer.
    pub intermediates: Vec<PiecewiseGaussian1D>,
}

/// n − 1 ReLU planar layers taking the piece-0 Gaussian to a
/// tail-consistent piecewise Gaussian target.
pub fn pwg_synthesize(target: &PiecewiseGaussian1D) -> Result<PwgSynthesis> {
    if !target.tail_consistent() {
        let worst = target.tail_consistency_residuals().iter().fold(0.0f64, |a, r| a.max(r.abs()));
        return Err(Error::hypothesis(format!("target is not tail-consistent (worst residual {worst:e})")));
    }
    let n = target.n_pieces();
    let tb = target.breakpoints();
    let base = target.pieces()[0];
    let mut cur = PiecewiseGaussian1D::new(vec![], vec![base])?;
    let mut layers = Vec::with_capacity(n - 1);
    let mut identity_layers = 0;
    let mut intermediates = Vec::with_capacity(n - 1);
    for k in 1..n {
        // split the current last piece at t_k, then rescale the new last piece
        let mut bps = cur.breakpoints().to_vec();
        bps.push(tb[k - 1]);
        let mut pieces = cur.pieces().to_vec();
        pieces.push(*pieces.last().unwrap());
        let split = PiecewiseGaussian1D::new(bps, pieces)?;
        let layer = relu_piece_fix(&split, target.pieces()[k])?;
        if let FlowLayer::Planar(p) = &layer {
            if p.w()[0] == 0.0 {
                identity_layers += 1;
            }
        }
        cur = push_piecewise(&split, &layer)?;
        intermediates.push(cur.clone());
        layers.push(layer);
    }
    Ok(PwgSynthesis { base, stack: FlowStack::new(layers)?, identity_layers, intermediates })
}

/// z ↦ σz + μ as two ReLU planar layers (slope σ on each half-line) and a
/// shift, itself a planar layer with w = 0: z + μ·relu(1).
pub fn affine_gadget(sigma: f64, mu: f64) -> Result<FlowStack> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::contract(format!("affine gadget needs σ > 0 and finite μ, got σ={sigma}, μ={mu}")));
    }
    FlowStack::new(vec![
        Planar::new(vec![sigma - 1.0], vec![1.0], 0.0, Nonlinearity::Relu)?.into(),
        Planar::new(vec![1.0 - sigma], vec![-1.0], 0.0, Nonlinearity::Relu)?.into(),
        Planar::new(vec![mu], vec![0.0], 1.0, Nonlinearity::Relu)?.into(),
    ])
}
