use super::layer::DEFAULT_EXCLUSION_MARGIN;
use super::FlowLayer;
use crate::densities::{grad_log_density, log_density, Density};
use crate::error::{check_dim, Error, Result};
use nalgebra::DMatrix;

/// Layers applied first to last; the empty stack is the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowStack {
    layers: Vec<FlowLayer>,
}

pub(crate) fn at_layer(e: Error, t: usize) -> Error {
    match e {
        Error::Invertibility { detail, .. } => Error::Invertibility { layer: t, detail },
        Error::NumericInversion { iterations, .. } => Error::NumericInversion { layer: t, iterations },
        e => e,
    }
}

impl FlowStack {
    pub fn new(layers: Vec<FlowLayer>) -> Result<Self> {
        if let Some(first) = layers.first() {
            let d = first.dim();
            for l in &layers {
                check_dim(d, l.dim())?;
            }
        }
        Ok(FlowStack { layers })
    }

    pub fn identity() -> Self {
        FlowStack::default()
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }
    pub fn len(&self) -> usize {
        self.layers.len()
    }
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
    /// None for the empty stack.
    pub fn dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.dim())
    }

    pub fn push(&mut self, layer: FlowLayer) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, layer.dim())?;
        }
        self.layers.push(layer);
        Ok(())
    }

    /// Appends `other` after `self`.
    pub fn then(mut self, other: FlowStack) -> Result<Self> {
        for l in other.layers {
            self.push(l)?;
        }
        Ok(self)
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, z.len())?;
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("flow input must be finite"));
        }
        Ok(())
    }

    /// f(z) and Σ_t log|det J_{f_t}(z_{t−1})|.
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(z)?;
        let mut x = z.to_vec();
        let mut ld = 0.0;
        for (t, l) in self.layers.iter().enumerate() {
            let (y, l_t) = l.forward(&x).map_err(|e| at_layer(e, t))?;
            x = y;
            ld += l_t;
        }
        Ok((x, ld))
    }

    /// z_0 = z, z_1, …, z_T.
    pub fn trajectory(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(z)?;
        let mut out = vec![z.to_vec()];
        for (t, l) in self.layers.iter().enumerate() {
            let (y, _) = l.forward(out.last().unwrap()).map_err(|e| at_layer(e, t))?;
            out.push(y);
        }
        Ok(out)
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_input(y)?;
        let mut x = y.to_vec();
        for (t, l) in self.layers.iter().enumerate().rev() {
            x = l.inverse(&x).map_err(|e| at_layer(e, t))?;
        }
        Ok(x)
    }

    /// Product of the layer Jacobians at z.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let traj = self.trajectory(z)?;
        let d = z.len();
        let mut j = DMatrix::identity(d, d);
        for (l, x) in self.layers.iter().zip(&traj) {
            j = l.jacobian(x) * j;
        }
        Ok(j)
    }

    /// log (f#q)(y) = log q(z) − log|det J_f(z)| at z = f⁻¹(y).
    pub fn pushforward_log_density(&self, base: &dyn Density, y: &[f64]) -> Result<f64> {
        let z = self.inverse(y)?;
        let (_, ld) = self.forward(&z)?;
        Ok(log_density(base, &z)? - ld)
    }

    pub fn pushforward_grad_log_density(&self, base: &dyn Density, y: &[f64]) -> Result<Vec<f64>> {
        self.pushforward_grad_log_density_with_margin(base, y, DEFAULT_EXCLUSION_MARGIN)
    }

    /// G_0 = ∇log q(z_0), G_t = J_t^{−ᵀ}(G_{t−1} − ∇log|det J_t|(z_{t−1})).
    pub fn pushforward_grad_log_density_with_margin(
        &self,
        base: &dyn Density,
        y: &[f64],
        margin: f64,
    ) -> Result<Vec<f64>> {
        let z = self.inverse(y)?;
        let traj = self.trajectory(&z)?;
        let mut g = grad_log_density(base, &z)?;
        for (l, x) in self.layers.iter().zip(&traj) {
            let gl = l.grad_log_det(x, margin)?;
            let v: Vec<f64> = g.iter().zip(&gl).map(|(a, b)| a - b).collect();
            g = l.inv_transpose_apply(x, &v)?;
        }
        Ok(g)
    }
}
