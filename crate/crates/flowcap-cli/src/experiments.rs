//! Reproduction experiments. Each run validates its parameters, writes
//! CSV/JSON outputs into `output_dir` and finishes with `manifest.json`.
//!
//! Column contracts:
//! - fig1.csv: x, p, p_tilde
//! - fig3_<n>.csv: x, p, q_pwc, q_pwg
//! - q_surface.csv / push_surface.csv / log_ratio.csv: x, y, value
//! - peaks.csv: qx, qy, fx, fy, px, py, cell_distance
//! - scaling.csv: d, lhat_bound, depth_lb, slope_estimate

use crate::error::{stage, CliError, CliResult};
use crate::io::{ensure_dir, write_csv, write_json, write_text};
use crate::manifest::{config_hash, describe, Manifest, LIBRARY_VERSION};
use flowcap::capacity::{scaling_study, ScalingFamily, ScalingParams};
use flowcap::construct1d::{approximate_target_1d, cdf_transport, TransportPushforward};
use flowcap::densities::{
    bimodal_target, density, fig1_target, full_support_relaxation, sample, DynDensity, Gaussian1D, GaussianD,
    MixtureGaussianD,
};
use flowcap::flows::{FlowLayer, FlowStack, Nonlinearity, Planar};
use flowcap::metrics::l1_grid_1d;
use flowcap::densities::Density;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Fig1,
    Fig3,
    TopoRelu2d,
    TopoTanh2d,
    ScalingHouseholder,
    ScalingLocalPlanar,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::Fig1,
        ExperimentName::Fig3,
        ExperimentName::TopoRelu2d,
        ExperimentName::TopoTanh2d,
        ExperimentName::ScalingHouseholder,
        ExperimentName::ScalingLocalPlanar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::Fig1 => "fig1",
            ExperimentName::Fig3 => "fig3",
            ExperimentName::TopoRelu2d => "topo_relu_2d",
            ExperimentName::TopoTanh2d => "topo_tanh_2d",
            ExperimentName::ScalingHouseholder => "scaling_householder",
            ExperimentName::ScalingLocalPlanar => "scaling_local_planar",
        }
    }

    fn schema(&self) -> &'static [(&'static str, Kind)] {
        use Kind::*;
        match self {
            ExperimentName::Fig1 => &[("eps", Num(0.1)), ("grid", Int(2001)), ("lo", Num(-5.0)), ("hi", Num(5.0))],
            ExperimentName::Fig3 => &[("eps", Num(0.01)), ("pieces", IntList(&[50, 300])), ("grid", Int(2001))],
            ExperimentName::TopoRelu2d => &[("layers", Int(2)), ("grid", Int(201))],
            ExperimentName::TopoTanh2d => &[("grid", Int(201))],
            ExperimentName::ScalingHouseholder => {
                &[("kappa", Num(1.0)), ("dims", IntList(&[64, 128, 256, 512])), ("l1_pq", Num(2.0)), ("eps", OptNum)]
            }
            ExperimentName::ScalingLocalPlanar => &[
                ("tau", Num(0.5)),
                ("c_h", Num(2.0)),
                ("dims", IntList(&[16, 32, 64, 128, 256])),
                ("l1_pq", Num(2.0)),
                ("eps", OptNum),
            ],
        }
    }
}

impl FromStr for ExperimentName {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        ExperimentName::ALL.iter().copied().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = ExperimentName::ALL.iter().map(|e| e.as_str()).collect();
            CliError::usage(format!("unknown experiment '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Num(f64),
    OptNum,
    Int(u64),
    IntList(&'static [u64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn schema_err(key: &str, msg: impl Into<String>) -> CliError {
    flowcap::Error::Schema { path: format!("$.parameters.{key}"), msg: msg.into() }.into()
}

impl ExperimentConfig {
    pub fn new(name: ExperimentName, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig { name, parameters: Map::new(), seed, output_dir: output_dir.into() }
    }

    pub fn with(mut self, key: &str, v: Value) -> Self {
        self.parameters.insert(key.to_string(), v);
        self
    }

    /// Checks every key and type; returns the parameters with defaults filled.
    pub fn resolved(&self) -> CliResult<Map<String, Value>> {
        let schema = self.name.schema();
        for key in self.parameters.keys() {
            if !schema.iter().any(|(k, _)| k == key) {
                return Err(schema_err(key, format!("unknown parameter for {}", self.name.as_str())));
            }
        }
        let mut out = Map::new();
        for (key, kind) in schema {
            let given = self.parameters.get(*key).filter(|v| !v.is_null());
            let v = match (kind, given) {
                (Kind::Num(d), None) => json!(d),
                (Kind::OptNum, None) => Value::Null,
                (Kind::Int(d), None) => json!(d),
                (Kind::IntList(d), None) => json!(d),
                (Kind::Num(_) | Kind::OptNum, Some(v)) => {
                    if !v.as_f64().is_some_and(f64::is_finite) {
                        return Err(schema_err(key, "expected a finite number"));
                    }
                    v.clone()
                }
                (Kind::Int(_), Some(v)) => {
                    if v.as_u64().is_none() {
                        return Err(schema_err(key, "expected a nonnegative integer"));
                    }
                    v.clone()
                }
                (Kind::IntList(_), Some(v)) => {
                    let ok = v.as_array().is_some_and(|a| !a.is_empty() && a.iter().all(|x| x.as_u64().is_some()));
                    if !ok {
                        return Err(schema_err(key, "expected a non-empty array of nonnegative integers"));
                    }
                    v.clone()
                }
            };
            out.insert(key.to_string(), v);
        }
        Ok(out)
    }

    fn canonical(&self, params: &Map<String, Value>) -> Value {
        json!({ "name": self.name.as_str(), "parameters": params, "seed": self.seed })
    }
}

struct Params(Map<String, Value>);

impl Params {
    fn num(&self, k: &str) -> f64 {
        self.0[k].as_f64().expect("validated number")
    }
    fn opt_num(&self, k: &str) -> Option<f64> {
        self.0[k].as_f64()
    }
    fn int(&self, k: &str) -> usize {
        self.0[k].as_u64().expect("validated integer") as usize
    }
    fn ints(&self, k: &str) -> Vec<usize> {
        self.0[k].as_array().expect("validated list").iter().map(|x| x.as_u64().unwrap() as usize).collect()
    }
}

struct Outputs {
    files: Vec<PathBuf>,
    summary: Value,
}

pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Manifest> {
    let params = config.resolved()?;
    let dir = config.output_dir.as_path();
    ensure_dir(dir)?;
    let p = Params(params.clone());
    let out = match config.name {
        ExperimentName::Fig1 => fig1(&p, dir)?,
        ExperimentName::Fig3 => fig3(&p, dir)?,
        ExperimentName::TopoRelu2d => topo_relu_2d(&p, config.seed, dir)?,
        ExperimentName::TopoTanh2d => topo_tanh_2d(&p, config.seed, dir)?,
        ExperimentName::ScalingHouseholder => {
            let fam = ScalingFamily::Householder { kappa: p.num("kappa") };
            scaling(&fam, &p, dir)?
        }
        ExperimentName::ScalingLocalPlanar => {
            let fam = ScalingFamily::LocalPlanar { tau: p.num("tau"), c_h: p.num("c_h") };
            scaling(&fam, &p, dir)?
        }
    };
    let canonical = config.canonical(&params);
    let manifest = Manifest {
        experiment: config.name.as_str().to_string(),
        library_version: LIBRARY_VERSION.to_string(),
        config_hash: config_hash(&canonical),
        config: canonical,
        files: describe(dir, &out.files)?,
        summary: out.summary,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn pdf(d: &dyn Density, x: &[f64]) -> f64 {
    density(d, x).unwrap_or(0.0)
}

fn fig1(p: &Params, dir: &Path) -> CliResult<Outputs> {
    let eps = p.num("eps");
    let target: DynDensity = Arc::new(fig1_target());
    let relaxed: DynDensity = Arc::new(stage("relaxation", full_support_relaxation(target.clone(), eps))?);
    let map = stage("transport", cdf_transport(Arc::new(Gaussian1D::standard()), relaxed))?;
    let push = TransportPushforward { map: Arc::new(map) };
    let rows: Vec<Vec<f64>> = linspace(p.num("lo"), p.num("hi"), p.int("grid"))
        .into_iter()
        .map(|x| vec![x, pdf(target.as_ref(), &[x]), pdf(&push, &[x])])
        .collect();
    let l1 = stage("l1", l1_grid_1d(&push, target.as_ref(), -12.0, 12.0, 8001))?;
    let f = write_csv(&dir.join("fig1.csv"), &["x", "p", "p_tilde"], &rows)?;
    Ok(Outputs { files: vec![f], summary: json!({ "eps": eps, "l1": l1.value, "within_eps": l1.value <= eps }) })
}

fn fig3(p: &Params, dir: &Path) -> CliResult<Outputs> {
    let eps = p.num("eps");
    let target = bimodal_target();
    let xs = linspace(-5.0, 5.0, p.int("grid"));
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for n in p.ints("pieces") {
        let a = stage(&format!("approximate_target_1d(n={n})"), approximate_target_1d(&target, eps, n))?;
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| vec![x, pdf(&target, &[x]), pdf(&a.pwc, &[x]), pdf(&a.pwg, &[x])])
            .collect();
        files.push(write_csv(&dir.join(format!("fig3_{n}.csv")), &["x", "p", "q_pwc", "q_pwg"], &rows)?);
        files.push(write_text(&dir.join(format!("flow_{n}.json")), &stage("serialize", a.stack.to_json_string())?)?);
        runs.push(json!({ "pieces": n, "report": a.report }));
    }
    Ok(Outputs { files, summary: json!({ "eps": eps, "runs": runs }) })
}

/// Four well-separated peaks at (±2, ±2).
pub fn four_peak_mog() -> MixtureGaussianD {
    let cov = DMatrix::from_row_slice(2, 2, &[0.35, 0.05, 0.05, 0.3]);
    let comps = [(-2.0, -2.0), (2.0, -2.0), (-2.0, 2.0), (2.0, 2.0)]
        .iter()
        .map(|&(a, b)| GaussianD::from_slices(&[a, b], cov.clone()).expect("valid component"))
        .collect();
    MixtureGaussianD::new(vec![0.3, 0.2, 0.25, 0.25], comps).expect("valid mixture")
}

#[derive(Debug, Clone)]
struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    vals: Vec<Vec<f64>>, // vals[i][j] at (xs[i], ys[j])
}

impl Grid {
    fn eval(lo: [f64; 2], hi: [f64; 2], n: usize, f: impl Fn(&[f64]) -> f64) -> Grid {
        let xs = linspace(lo[0], hi[0], n);
        let ys = linspace(lo[1], hi[1], n);
        let vals = xs.iter().map(|&x| ys.iter().map(|&y| f(&[x, y])).collect()).collect();
        Grid { xs, ys, vals }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.xs.len() * self.ys.len());
        for (i, &x) in self.xs.iter().enumerate() {
            for (j, &y) in self.ys.iter().enumerate() {
                out.push(vec![x, y, self.vals[i][j]]);
            }
        }
        out
    }

    fn step(&self) -> [f64; 2] {
        [self.xs[1] - self.xs[0], self.ys[1] - self.ys[0]]
    }

    /// Cells at least as large as all 8 neighbours and above `floor`·max.
    fn local_maxima(&self, floor: f64) -> Vec<(usize, usize)> {
        let max = self.vals.iter().flatten().cloned().fold(0.0, f64::max);
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut out = Vec::new();
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let v = self.vals[i][j];
                if v <= floor * max {
                    continue;
                }
                let is_max = (i - 1..=i + 1).all(|a| (j - 1..=j + 1).all(|b| self.vals[a][b] <= v));
                if is_max {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn cell_of(&self, z: &[f64]) -> (f64, f64) {
        let h = self.step();
        ((z[0] - self.xs[0]) / h[0], (z[1] - self.ys[0]) / h[1])
    }
}

/// Mean ± 6 standard deviations per coordinate.
fn fitted_window(points: &[Vec<f64>]) -> ([f64; 2], [f64; 2]) {
    let n = points.len() as f64;
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    for k in 0..2 {
        let m = points.iter().map(|p| p[k]).sum::<f64>() / n;
        let sd = (points.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / n).sqrt();
        lo[k] = m - 6.0 * sd;
        hi[k] = m + 6.0 * sd;
    }
    (lo, hi)
}

fn relu_stack(layers: usize, peaks: &[[f64; 2]], rng: &mut ChaCha8Rng) -> FlowStack {
    // hyperplanes are kept ≥ 0.75 away from every peak's trajectory
    let mut stack = FlowStack::identity();
    let mut pts: Vec<Vec<f64>> = peaks.iter().map(|p| p.to_vec()).collect();
    while stack.len() < layers {
        let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let w = [th.cos(), th.sin()];
        let b = rng.random::<f64>() * 2.0 - 1.0;
        let t = rng.random::<f64>() * 1.2 - 0.5;
        let s = rng.random::<f64>() * 0.8 - 0.4;
        let u = [t * w[0] - s * w[1], t * w[1] + s * w[0]];
        if pts.iter().any(|z| (w[0] * z[0] + w[1] * z[1] + b).abs() < 0.75) {
            continue;
        }
        let layer = FlowLayer::Planar(Planar::new(u.to_vec(), w.to_vec(), b, Nonlinearity::Relu).expect("guarded ReLU layer"));
        let one = FlowStack::new(vec![layer.clone()]).unwrap();
        pts = pts.iter().map(|z| one.forward(z).unwrap().0).collect();
        stack.push(layer).unwrap();
    }
    stack
}

fn topo_relu_2d(p: &Params, seed: u64, dir: &Path) -> CliResult<Outputs> {
    let n = p.int("grid").max(3);
    let q = four_peak_mog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peaks = [[-2.0, -2.0], [2.0, -2.0], [-2.0, 2.0], [2.0, 2.0]];
    let f = relu_stack(p.int("layers"), &peaks, &mut rng);
    let zs = stage("sampling", sample(&q, seed.wrapping_add(1), 20_000))?;
    let (qlo, qhi) = fitted_window(&zs);
    let qgrid = Grid::eval(qlo, qhi, n, |z| pdf(&q, z));
    let pushed: Vec<Vec<f64>> = zs.iter().map(|z| f.forward(z).map(|r| r.0)).collect::<Result<_, _>>()?;
    let (plo, phi) = fitted_window(&pushed);
    let pgrid = Grid::eval(plo, phi, n, |y| f.pushforward_log_density(&q, y).map(f64::exp).unwrap_or(0.0));
    let qmax = qgrid.local_maxima(1e-3);
    let pmax = pgrid.local_maxima(1e-3);
    let mut rows = Vec::new();
    for &(i, j) in &qmax {
        let z = [qgrid.xs[i], qgrid.ys[j]];
        let y = stage("forward", f.forward(&z))?.0;
        let (ci, cj) = pgrid.cell_of(&y);
        let best = pmax
            .iter()
            .map(|&(a, b)| ((a as f64 - ci).abs().max((b as f64 - cj).abs()), a, b))
            .fold((f64::INFINITY, 0, 0), |m, c| if c.0 < m.0 { c } else { m });
        let (px, py) = if best.0.is_finite() { (pgrid.xs[best.1], pgrid.ys[best.2]) } else { (f64::NAN, f64::NAN) };
        rows.push(vec![z[0], z[1], y[0], y[1], px, py, best.0]);
    }
    let matched = rows.iter().filter(|r| r[6] <= 1.0).count();
    let files = vec![
        write_csv(&dir.join("q_surface.csv"), &["x", "y", "value"], &qgrid.rows())?,
        write_csv(&dir.join("push_surface.csv"), &["x", "y", "value"], &pgrid.rows())?,
        write_csv(&dir.join("peaks.csv"), &["qx", "qy", "fx", "fy", "px", "py", "cell_distance"], &rows)?,
        write_text(&dir.join("flow.json"), &stage("serialize", f.to_json_string())?)?,
    ];
    let summary = json!({
        "q_peaks": qmax.len(),
        "push_peaks": pmax.len(),
        "matched_within_one_cell": matched,
        "all_matched": matched == qmax.len() && !qmax.is_empty(),
    });
    Ok(Outputs { files, summary })
}

fn topo_tanh_2d(p: &Params, seed: u64, dir: &Path) -> CliResult<Outputs> {
    let n = p.int("grid").max(3);
    let q = four_peak_mog();
    let w = [0.8, -0.6];
    let layer = Planar::new(vec![1.2, 0.4], w.to_vec(), 0.3, Nonlinearity::Tanh)?;
    let f = FlowStack::new(vec![FlowLayer::Planar(layer)])?;
    let zs = stage("sampling", sample(&q, seed.wrapping_add(1), 20_000))?;
    let (qlo, qhi) = fitted_window(&zs);
    let pushed: Vec<Vec<f64>> = zs.iter().map(|z| f.forward(z).map(|r| r.0)).collect::<Result<_, _>>()?;
    let (plo, phi) = fitted_window(&pushed);
    let qgrid = Grid::eval(qlo, qhi, n, |z| pdf(&q, z));
    let pgrid = Grid::eval(plo, phi, n, |y| f.pushforward_log_density(&q, y).map(f64::exp).unwrap_or(0.0));
    // log p(f(x)) − log q(x) with p = f#q
    let ratio = |x: &[f64]| -> f64 {
        let y = f.forward(x).expect("finite input").0;
        f.pushforward_log_density(&q, &y).unwrap_or(f64::NAN) - flowcap::densities::log_density(&q, x).unwrap_or(f64::NAN)
    };
    let rgrid = Grid::eval(qlo, qhi, n, ratio);
    // direction of the finite-difference gradient against w
    let h = rgrid.step();
    let wn = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let gx = (rgrid.vals[i + 1][j] - rgrid.vals[i - 1][j]) / (2.0 * h[0]);
            let gy = (rgrid.vals[i][j + 1] - rgrid.vals[i][j - 1]) / (2.0 * h[1]);
            let g = (gx * gx + gy * gy).sqrt();
            if !(g > 1e-6) {
                continue;
            }
            let cos = ((gx * w[0] + gy * w[1]) / (g * wn)).abs();
            worst = worst.max(1.0 - cos);
            checked += 1;
        }
    }
    let files = vec![
        write_csv(&dir.join("q_surface.csv"), &["x", "y", "value"], &qgrid.rows())?,
        write_csv(&dir.join("push_surface.csv"), &["x", "y", "value"], &pgrid.rows())?,
        write_csv(&dir.join("log_ratio.csv"), &["x", "y", "value"], &rgrid.rows())?,
        write_text(&dir.join("flow.json"), &stage("serialize", f.to_json_string())?)?,
    ];
    let summary = json!({ "gradient_points": checked, "max_direction_deviation": worst });
    Ok(Outputs { files, summary })
}

fn scaling(family: &ScalingFamily, p: &Params, dir: &Path) -> CliResult<Outputs> {
    let params = ScalingParams { l1_pq: p.num("l1_pq"), eps: p.opt_num("eps") };
    let rows = stage("scaling_study", scaling_study(family, &p.ints("dims"), &params))?;
    let files = vec![write_scaling_csv(&dir.join("scaling.csv"), &rows)?];
    let slope = rows[0].slope_estimate;
    Ok(Outputs { files, summary: json!({ "family": family, "slope": slope, "rows": rows }) })
}

pub fn write_scaling_csv(path: &Path, rows: &[flowcap::capacity::ScalingRow]) -> CliResult<PathBuf> {
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.d as f64, r.lhat_bound, r.depth_lb, r.slope_estimate]).collect();
    write_csv(path, &["d", "lhat_bound", "depth_lb", "slope_estimate"], &table)
}
