//! FlowStack JSON, schema "flowcap-flow-1":
//! `{"schema": "flowcap-flow-1", "layers": [{"variant": "planar", ...}, ...]}`.

use super::*;
use crate::linalg::{from_rows, to_rows};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const FLOW_SCHEMA: &str = "flowcap-flow-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum LayerSpec {
    Planar {
        u: Vec<f64>,
        w: Vec<f64>,
        b: f64,
        h: String,
    },
    Sylvester {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        bm: Vec<Vec<f64>>,
        b: Vec<f64>,
        h: String,
    },
    Radial {
        a: f64,
        b: f64,
        z0: Vec<f64>,
    },
    Householder {
        v: Vec<f64>,
    },
}

fn schema_err(path: impl Into<String>, msg: impl ToString) -> Error {
    Error::Schema { path: path.into(), msg: msg.to_string() }
}

fn h_name(h: &Nonlinearity) -> Result<String> {
    match h {
        Nonlinearity::Custom(c) => Err(Error::Unsupported(format!("serializing custom nonlinearity '{}'", c.name))),
        h => Ok(h.name()),
    }
}

impl LayerSpec {
    fn from_layer(l: &FlowLayer) -> Result<Self> {
        Ok(match l {
            FlowLayer::Planar(p) => LayerSpec::Planar { u: p.u().to_vec(), w: p.w().to_vec(), b: p.b(), h: h_name(p.h())? },
            FlowLayer::Sylvester(s) => LayerSpec::Sylvester {
                a: to_rows(s.a()),
                bm: to_rows(s.bmat()),
                b: s.b().to_vec(),
                h: h_name(s.h())?,
            },
            FlowLayer::Radial(r) => LayerSpec::Radial { a: r.a(), b: r.b(), z0: r.z0().to_vec() },
            FlowLayer::Householder(h) => LayerSpec::Householder { v: h.v().to_vec() },
        })
    }

    fn build(self, path: &str) -> Result<FlowLayer> {
        let parse_h = |h: &str| Nonlinearity::parse(h).map_err(|e| schema_err(format!("{path}.h"), e));
        let whole = |e: Error| schema_err(path, e);
        Ok(match self {
            LayerSpec::Planar { u, w, b, h } => Planar::new(u, w, b, parse_h(&h)?).map_err(whole)?.into(),
            LayerSpec::Sylvester { a, bm, b, h } => {
                let a = from_rows(&a).map_err(|e| schema_err(format!("{path}.A"), e))?;
                let bm = from_rows(&bm).map_err(|e| schema_err(format!("{path}.B"), e))?;
                Sylvester::new(a, bm, b, parse_h(&h)?).map_err(whole)?.into()
            }
            LayerSpec::Radial { a, b, z0 } => Radial::new(a, b, z0).map_err(whole)?.into(),
            LayerSpec::Householder { v } => {
                Householder::new(v).map_err(|e| schema_err(format!("{path}.v"), e))?.into()
            }
        })
    }
}

impl FlowStack {
    /// Errors for custom nonlinearities, which have no JSON form.
    pub fn to_json(&self) -> Result<Value> {
        let layers = self
            .layers()
            .iter()
            .map(|l| LayerSpec::from_layer(l).map(|s| serde_json::to_value(s).expect("layer serializes")))
            .collect::<Result<Vec<_>>>()?;
        Ok(json!({ "schema": FLOW_SCHEMA, "layers": layers }))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json()?).expect("json value prints"))
    }

    /// Validates every layer; errors carry paths like `$.layers[2].v`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| schema_err("$", "expected a JSON object"))?;
        for key in obj.keys() {
            if key != "schema" && key != "layers" {
                return Err(schema_err(format!("$.{key}"), "unknown field"));
            }
        }
        if let Some(s) = obj.get("schema") {
            if s.as_str() != Some(FLOW_SCHEMA) {
                return Err(schema_err(
                    "$.schema",
                    format!("version mismatch: expected \"{FLOW_SCHEMA}\", got {s}"),
                ));
            }
        }
        let layers = obj
            .get("layers")
            .ok_or_else(|| schema_err("$.layers", "missing field"))?
            .as_array()
            .ok_or_else(|| schema_err("$.layers", "expected an array"))?;
        let mut built = Vec::with_capacity(layers.len());
        for (i, l) in layers.iter().enumerate() {
            let path = format!("$.layers[{i}]");
            let spec: LayerSpec = serde_json::from_value(l.clone()).map_err(|e| schema_err(&path, e))?;
            built.push(spec.build(&path)?);
        }
        FlowStack::new(built).map_err(|e| schema_err("$.layers", e))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| schema_err("$", e))?;
        FlowStack::from_json(&v)
    }
}
