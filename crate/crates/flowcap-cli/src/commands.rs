use crate::cli::*;
use crate::error::{CliError, CliResult};
use crate::experiments::{run_experiment, write_scaling_csv, ExperimentConfig, ExperimentName};
use crate::io::*;
use crate::validate::validate_files;
use flowcap::capacity::{lhat_monte_carlo, scaling_study, CapacityReport, ScalingFamily, ScalingParams};
use flowcap::construct1d::approximate_target_1d;
use flowcap::densities::{bimodal_target, density, fig1_target, DynDensity};
use flowcap::flows::{FlowLayer, FlowStack};
use flowcap::lincompile::compile_affine;
use flowcap::metrics::{default_window, l1_grid_1d_auto, l1_pushforward_mc};
use flowcap::topology::{default_margin, default_points, gaussian_feasibility, residual_radial, residual_relu, residual_span, Family};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn emit(out: &mut dyn Write, dest: Option<&Path>, v: &impl Serialize) -> CliResult<()> {
    match dest {
        Some(p) => {
            write_json(p, v)?;
            writeln!(out, "wrote {}", p.display()).map_err(|e| CliError::io("<stdout>", e))
        }
        None => print_json(out, v),
    }
}

fn print_json(out: &mut dyn Write, v: &impl Serialize) -> CliResult<()> {
    let s = serde_json::to_string_pretty(v).expect("serializable value");
    writeln!(out, "{s}").map_err(|e| CliError::io("<stdout>", e))
}

fn points(p: &PointsArg) -> CliResult<Vec<Vec<f64>>> {
    match (&p.points, &p.z) {
        (Some(path), _) => read_points(path),
        (None, Some(z)) => parse_points(z),
        (None, None) => Err(CliError::usage("give --points FILE or --z \"x1,x2;...\"")),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Flow { op } => flow(op, out),
        Command::Synth1d(a) => synth_1d(a, out),
        Command::CompileLinear(a) => compile_linear(a, out),
        Command::TopoCheck(a) => topo_check(a, out),
        Command::Feasibility(a) => feasibility(a, out),
        Command::Capacity(a) => capacity(a, out),
        Command::L1(a) => l1(a, out),
        Command::Repro(a) => repro(a, out),
        Command::Validate { paths } => validate(&paths, out),
    }
}

fn flow(op: FlowOp, out: &mut dyn Write) -> CliResult<()> {
    match op {
        FlowOp::Eval { flow, pts, common } => {
            let f = read_flow(&flow)?;
            let rows = points(&pts)?
                .into_iter()
                .map(|z| {
                    let (y, ld) = f.forward(&z)?;
                    Ok(json!({ "z": z, "y": y, "log_det": ld }))
                })
                .collect::<CliResult<Vec<Value>>>()?;
            emit(out, common.out.as_deref(), &rows)
        }
        FlowOp::Invert { flow, pts, common } => {
            let f = read_flow(&flow)?;
            let rows = points(&pts)?
                .into_iter()
                .map(|y| Ok(json!({ "y": y, "z": f.inverse(&y)? })))
                .collect::<CliResult<Vec<Value>>>()?;
            emit(out, common.out.as_deref(), &rows)
        }
    }
}

fn named_target(name: &str) -> CliResult<DynDensity> {
    match name {
        "fig1" => Ok(Arc::new(fig1_target())),
        "bimodal" => Ok(Arc::new(bimodal_target())),
        _ => Err(CliError::usage(format!("unknown named target '{name}' (fig1, bimodal)"))),
    }
}

fn synth_1d(a: Synth1dArgs, out: &mut dyn Write) -> CliResult<()> {
    let p = match (&a.target, &a.named) {
        (Some(path), _) => read_dist(path)?,
        (None, Some(n)) => named_target(n)?,
        (None, None) => return Err(CliError::usage("give --target FILE or --named NAME")),
    };
    let approx = approximate_target_1d(p.as_ref(), a.eps, a.pieces)?;
    let report = json!({ "eps": a.eps, "report": approx.report });
    if let Some(dir) = &a.common.out {
        let (lo, hi) = default_window(p.as_ref(), &approx.pwg);
        let n = a.grid.max(2);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                vec![x, density(p.as_ref(), &[x]).unwrap_or(0.0), approx.stack.pushforward_log_density(&approx.base, &[x]).map(f64::exp).unwrap_or(0.0)]
            })
            .collect();
        write_csv(&dir.join("curve.csv"), &["x", "p", "approx"], &rows)?;
        write_text(&dir.join("flow.json"), &approx.stack.to_json_string()?)?;
        write_json(&dir.join("base.json"), &flowcap::densities::spec::to_json(&approx.base)?)?;
        write_json(&dir.join("report.json"), &report)?;
    }
    print_json(out, &report)
}

fn compile_linear(a: CompileArgs, out: &mut dyn Write) -> CliResult<()> {
    let m = read_matrix(&a.matrix)?;
    let file_shift: Option<Vec<f64>> = read_json(&a.matrix)?
        .get("shift")
        .map(|s| serde_json::from_value(s.clone()))
        .transpose()
        .map_err(|e| flowcap::Error::Schema { path: "$.shift".into(), msg: e.to_string() })?;
    let shift = match &a.shift {
        Some(s) => Some(parse_list(s)?),
        None => file_shift,
    };
    let r = compile_affine(&m, shift.as_deref())?;
    let doc = json!({ "report": r.report(), "shift": r.shift, "flow": r.stack.to_json()? });
    emit(out, a.common.out.as_deref(), &doc)
}

fn topo_check(a: TopoArgs, out: &mut dyn Write) -> CliResult<()> {
    let f = read_flow(&a.flow)?;
    let q = read_dist(&a.base)?;
    let pts = default_points(q.as_ref(), a.n, a.common.seed)?;
    let rep = match a.kind {
        TopoKind::Relu => residual_relu(&f, q.as_ref(), &pts, default_margin())?,
        TopoKind::Span => residual_span(&f, q.as_ref(), &pts)?,
        TopoKind::Radial => match f.layers() {
            [FlowLayer::Radial(r)] => residual_radial(r, q.as_ref(), &pts, default_margin())?,
            _ => return Err(flowcap::Error::WrongFamily("radial check takes a single radial layer".into()).into()),
        },
    };
    if let Some(path) = &a.common.out {
        let d = q.dim();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = vec!["index".into()];
        header.extend((0..d).map(|k| format!("z{k}")));
        header.extend(["residual", "excluded", "cosine", "reason"].map(String::from));
        w.write_record(&header)?;
        for (i, p) in rep.points.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(p.z.iter().map(|x| x.to_string()));
            rec.push(p.residual.map_or(String::new(), |r| r.to_string()));
            rec.push((p.residual.is_none() as u8).to_string());
            rec.push(p.cosine.map_or(String::new(), |c| c.to_string()));
            rec.push(p.reason.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
        write_text(path, &String::from_utf8(bytes).expect("utf-8"))?;
    }
    let summary = json!({
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "points": rep.points.len(),
        "excluded": rep.excluded,
        "max_residual": rep.max_residual,
        "vacuous": rep.vacuous,
    });
    print_json(out, &summary)
}

fn feasibility(a: FeasibilityArgs, out: &mut dyn Write) -> CliResult<()> {
    let sq = read_matrix(&a.cov_q)?;
    let sp = read_matrix(&a.cov_p)?;
    let fam: Family = a.family.parse()?;
    let v = gaussian_feasibility(&sq, &sp, fam, a.m)?;
    emit(out, a.common.out.as_deref(), &v)
}

fn capacity(a: CapacityArgs, out: &mut dyn Write) -> CliResult<()> {
    if let Some(flow) = &a.flow {
        let target = a.target.as_ref().ok_or_else(|| CliError::usage("--flow needs --target"))?;
        let p = read_dist(target)?;
        let f = read_flow(flow)?;
        let est = lhat_monte_carlo(p.as_ref(), &f, None, a.n, a.common.seed)?;
        let report = CapacityReport::new(a.l1, a.eps, Some(est), None)?;
        return emit(out, a.common.out.as_deref(), &report);
    }
    let family = match a.family.expect("clap requires --family without --flow") {
        CapacityFamily::Householder => ScalingFamily::Householder { kappa: a.kappa },
        CapacityFamily::LocalPlanar => ScalingFamily::LocalPlanar { tau: a.tau, c_h: a.c_h },
    };
    let dims = match (&a.dims, &family) {
        (Some(s), _) => parse_dims(s)?,
        (None, ScalingFamily::Householder { .. }) => vec![64, 128, 256, 512],
        (None, _) => vec![16, 32, 64, 128, 256],
    };
    let rows = scaling_study(&family, &dims, &ScalingParams { l1_pq: a.l1, eps: a.eps })?;
    if let Some(path) = &a.common.out {
        write_scaling_csv(path, &rows)?;
    }
    print_json(out, &json!({ "family": family, "slope": rows[0].slope_estimate, "rows": rows }))
}

fn l1(a: L1Args, out: &mut dyn Write) -> CliResult<()> {
    let p = read_dist(&a.p)?;
    let q = read_dist(&a.q)?;
    let est = match a.method {
        L1Method::Grid => {
            if a.flow.is_some() {
                return Err(CliError::usage("--flow needs --method mc"));
            }
            l1_grid_1d_auto(p.as_ref(), q.as_ref())?
        }
        L1Method::Mc => {
            let f = match &a.flow {
                Some(path) => read_flow(path)?,
                None => FlowStack::identity(),
            };
            l1_pushforward_mc(&f, q.as_ref(), p.as_ref(), a.n, a.common.seed)?
        }
    };
    emit(out, a.common.out.as_deref(), &est)
}

fn repro(a: ReproArgs, out: &mut dyn Write) -> CliResult<()> {
    let configs: Vec<ExperimentConfig> = if let Some(path) = &a.config {
        let v = read_json(path)?;
        let c: ExperimentConfig = serde_json::from_value(v)
            .map_err(|e| flowcap::Error::Schema { path: format!("{}:$", path.display()), msg: e.to_string() })?;
        vec![c]
    } else {
        let root = a.common.out.clone().unwrap_or_else(|| PathBuf::from("repro-out"));
        let names: Vec<ExperimentName> = if a.names.is_empty() {
            ExperimentName::ALL.to_vec()
        } else {
            a.names.iter().map(|n| n.parse()).collect::<CliResult<_>>()?
        };
        names.into_iter().map(|n| ExperimentConfig::new(n, a.common.seed, root.join(n.as_str()))).collect()
    };
    let mut manifests = Vec::new();
    for c in &configs {
        manifests.push(run_experiment(c)?);
    }
    print_json(out, &manifests)
}

fn validate(paths: &[PathBuf], out: &mut dyn Write) -> CliResult<()> {
    let reports = validate_files(paths)?;
    print_json(out, &reports)?;
    let failed = reports.iter().filter(|r| !r.ok).count();
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {} files failed validation", reports.len())));
    }
    Ok(())
}
