//! JSON form of distributions, schema "flowcap-dist-1":
//! `{"schema": "flowcap-dist-1", "kind": "...", ...}` with row-major matrices.

use super::*;
use crate::linalg;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DIST_SCHEMA: &str = "flowcap-dist-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Gaussian1d { mu: f64, sigma: f64 },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Mixture { weights: Vec<f64>, components: Vec<GaussianSpec> },
    PiecewiseGaussian { breakpoints: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64> },
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
    Radial { d: usize, tau: f64, variant: RadialKind },
    ProductPow { g: ScalarKernel, r: f64, d: usize },
    StudentT { loc: Vec<f64>, scale: f64, dof: f64 },
    NamedTarget { name: String },
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Schema { path: path.to_string(), msg: e.to_string() }
}

fn gaussian(mean: &[f64], cov: &[Vec<f64>], path: &str) -> Result<GaussianD> {
    let c = linalg::from_rows(cov).map_err(at(&format!("{path}.cov")))?;
    GaussianD::from_slices(mean, c).map_err(at(path))
}

impl DistSpec {
    pub fn build(&self) -> Result<DynDensity> {
        self.build_at("$")
    }

    fn build_at(&self, path: &str) -> Result<DynDensity> {
        Ok(match self {
            DistSpec::Gaussian1d { mu, sigma } => Arc::new(Gaussian1D::new(*mu, *sigma).map_err(at(path))?),
            DistSpec::Gaussian { mean, cov } => Arc::new(gaussian(mean, cov, path)?),
            DistSpec::Mixture { weights, components } => {
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| gaussian(&c.mean, &c.cov, &format!("{path}.components[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(MixtureGaussianD::new(weights.clone(), comps).map_err(at(path))?)
            }
            DistSpec::PiecewiseGaussian { breakpoints, mu, sigma } => {
                if mu.len() != sigma.len() {
                    return Err(Error::Schema { path: format!("{path}.sigma"), msg: "length differs from mu".into() });
                }
                let pieces = mu
                    .iter()
                    .zip(sigma)
                    .enumerate()
                    .map(|(i, (&m, &s))| Gaussian1D::new(m, s).map_err(at(&format!("{path}.sigma[{i}]"))))
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(PiecewiseGaussian1D::new(breakpoints.clone(), pieces).map_err(at(path))?)
            }
            DistSpec::PiecewiseConstant { breakpoints, values } => {
                Arc::new(PiecewiseConstant1D::new(breakpoints.clone(), values.clone()).map_err(at(path))?)
            }
            DistSpec::Radial { d, tau, variant } => Arc::new(RadialDensity::new(*d, *tau, *variant).map_err(at(path))?),
            DistSpec::ProductPow { g, r, d } => Arc::new(ProductDensity1DPow::new(*g, *r, *d).map_err(at(path))?),
            DistSpec::StudentT { loc, scale, dof } => {
                Arc::new(StudentT::new(loc.clone(), *scale, *dof).map_err(at(path))?)
            }
            DistSpec::NamedTarget { name } => match name.as_str() {
                "fig1" => Arc::new(fig1_target()),
                "bimodal" => Arc::new(bimodal_target()),
                _ => {
                    return Err(Error::Schema {
                        path: format!("{path}.name"),
                        msg: format!("unknown named target '{name}'"),
                    })
                }
            },
        })
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("DistSpec serializes");
        v.as_object_mut().unwrap().insert("schema".into(), Value::String(DIST_SCHEMA.into()));
        v
    }

    /// Parses a distribution object; "schema", when present, must match.
    pub fn from_json(v: &Value) -> Result<DistSpec> {
        let mut v = v.clone();
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Error::Schema { path: "$".into(), msg: "expected a JSON object".into() })?;
        if let Some(s) = obj.remove("schema") {
            if s.as_str() != Some(DIST_SCHEMA) {
                return Err(Error::Schema {
                    path: "$.schema".into(),
                    msg: format!("version mismatch: expected \"{DIST_SCHEMA}\", got {s}"),
                });
            }
        }
        serde_json::from_value(v).map_err(|e| Error::Schema { path: "$".into(), msg: e.to_string() })
    }
}

/// Serializes a density, or errors for kinds without a JSON form.
pub fn to_json(dist: &dyn Density) -> Result<Value> {
    dist.to_spec()
        .map(|s| s.to_json())
        .ok_or_else(|| Error::Unsupported(format!("serializing {}", dist.name())))
}

pub fn from_json(v: &Value) -> Result<DynDensity> {
    DistSpec::from_json(v)?.build()
}

pub fn from_str(s: &str) -> Result<DynDensity> {
    let v: Value = serde_json::from_str(s).map_err(|e| Error::Schema { path: "$".into(), msg: e.to_string() })?;
    from_json(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_kinds() {
        let dists: Vec<DynDensity> = vec![
            Arc::new(Gaussian1D::new(0.1, 2.0 / 3.0).unwrap()),
            Arc::new(GaussianD::standard(3)),
            Arc::new(PiecewiseConstant1D::uniform(-1.0, 2.0).unwrap()),
            Arc::new(RadialDensity::new(4, 0.5, RadialKind::FlatCore).unwrap()),
            Arc::new(ProductDensity1DPow::new(ScalarKernel::Logistic, 1.5, 2).unwrap()),
            Arc::new(StudentT::new(vec![0.0, 1.0], 1.3, 5.0).unwrap()),
            Arc::new(fig1_target()),
        ];
        for d in dists {
            let j = to_json(d.as_ref()).unwrap();
            let text = serde_json::to_string(&j).unwrap();
            let back = from_str(&text).unwrap();
            assert_eq!(back.to_spec(), d.to_spec());
        }
    }

    #[test]
    fn wrong_schema_version() {
        let e = from_str(r#"{"schema":"flowcap-dist-0","kind":"gaussian1d","mu":0,"sigma":1}"#).unwrap_err();
        assert!(matches!(e, Error::Schema { ref path, .. } if path == "$.schema"));
    }

    #[test]
    fn nested_error_path() {
        let s = r#"{"kind":"mixture","weights":[0.5,0.5],
            "components":[{"mean":[0],"cov":[[1]]},{"mean":[0],"cov":[[-1]]}]}"#;
        match from_str(s).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "$.components[1]"),
            e => panic!("{e:?}"),
        }
    }
}
