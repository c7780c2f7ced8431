use crate::error::{Error, Result};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied smooth activation with h, h', h'' and the range of h'.
pub struct CustomSmooth {
    pub name: String,
    pub h: ScalarFn,
    pub dh: ScalarFn,
    pub d2h: ScalarFn,
    /// (inf h', sup h') over ℝ
    pub dh_range: (f64, f64),
    pub c_h: Option<f64>,
}

#[derive(Clone)]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Sigmoid,
    Arctan,
    Custom(Arc<CustomSmooth>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl PartialEq for Nonlinearity {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Nonlinearity::Custom(a), Nonlinearity::Custom(b)) => Arc::ptr_eq(a, b),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Nonlinearity {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Nonlinearity::Relu,
            "tanh" => Nonlinearity::Tanh,
            "sigmoid" => Nonlinearity::Sigmoid,
            "arctan" => Nonlinearity::Arctan,
            _ => return Err(Error::contract(format!("unknown nonlinearity '{s}'"))),
        })
    }

    pub fn custom(c: CustomSmooth) -> Result<Self> {
        let (lo, hi) = c.dh_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::contract("custom nonlinearity needs a finite h' range"));
        }
        Ok(Nonlinearity::Custom(Arc::new(c)))
    }

    pub fn name(&self) -> String {
        match self {
            Nonlinearity::Relu => "relu".into(),
            Nonlinearity::Tanh => "tanh".into(),
            Nonlinearity::Sigmoid => "sigmoid".into(),
            Nonlinearity::Arctan => "arctan".into(),
            Nonlinearity::Custom(c) => c.name.clone(),
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, Nonlinearity::Relu)
    }

    pub fn h(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Sigmoid => sigmoid(x),
            Nonlinearity::Arctan => x.atan(),
            Nonlinearity::Custom(c) => (c.h)(x),
        }
    }

    /// h'(x); ReLU uses the right-continuous convention h'(0) = 1.
    pub fn dh(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => {
                let c = x.cosh();
                if c.is_finite() { 1.0 / (c * c) } else { 0.0 }
            }
            Nonlinearity::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Nonlinearity::Arctan => 1.0 / (1.0 + x * x),
            Nonlinearity::Custom(c) => (c.dh)(x),
        }
    }

    pub fn d2h(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => 0.0,
            Nonlinearity::Tanh => -2.0 * x.tanh() * self.dh(x),
            Nonlinearity::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Nonlinearity::Arctan => {
                let q = 1.0 + x * x;
                -2.0 * x / (q * q)
            }
            Nonlinearity::Custom(c) => (c.d2h)(x),
        }
    }

    /// (inf h', sup h') over ℝ.
    pub fn dh_range(&self) -> (f64, f64) {
        match self {
            Nonlinearity::Relu | Nonlinearity::Tanh | Nonlinearity::Arctan => (0.0, 1.0),
            Nonlinearity::Sigmoid => (0.0, 0.25),
            Nonlinearity::Custom(c) => c.dh_range,
        }
    }

    /// Locality constant: |h'(x)| ≤ c_h/(1+|x|).
    pub fn c_h(&self) -> Option<f64> {
        match self {
            Nonlinearity::Relu => None,
            Nonlinearity::Tanh => Some(2.0),
            Nonlinearity::Sigmoid => Some(1.0),
            Nonlinearity::Arctan => Some(FRAC_PI_2),
            Nonlinearity::Custom(c) => c.c_h,
        }
    }

    /// Bound on |h| when finite; used to bracket scalar inversions.
    pub(crate) fn h_bound(&self) -> Option<f64> {
        match self {
            Nonlinearity::Tanh | Nonlinearity::Sigmoid => Some(1.0),
            Nonlinearity::Arctan => Some(FRAC_PI_2),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        for h in [Nonlinearity::Tanh, Nonlinearity::Sigmoid, Nonlinearity::Arctan, Nonlinearity::Relu] {
            for k in -40..=40 {
                let x = k as f64 * 0.173 + 0.01;
                let e = 1e-6;
                let fd = (h.h(x + e) - h.h(x - e)) / (2.0 * e);
                assert!((fd - h.dh(x)).abs() < 1e-6, "{h:?} h' at {x}");
                let fd2 = (h.dh(x + e) - h.dh(x - e)) / (2.0 * e);
                assert!((fd2 - h.d2h(x)).abs() < 1e-6, "{h:?} h'' at {x}");
            }
        }
        assert_eq!(Nonlinearity::Relu.dh(0.0), 1.0);
    }

    #[test]
    fn locality_constants_hold() {
        for h in [Nonlinearity::Tanh, Nonlinearity::Sigmoid, Nonlinearity::Arctan] {
            let c = h.c_h().unwrap();
            let (_, sup) = h.dh_range();
            for k in 0..20_000 {
                let x = -50.0 + k as f64 * 0.005;
                assert!(h.dh(x).abs() * (1.0 + x.abs()) <= c);
                assert!(h.dh(x) <= sup + 1e-15);
            }
        }
    }
}
