//! Study execution.

use std::time::Instant;

use aniso_hybrid::{
    build_system, derive_xi2, eoc, error_norms, ess_distance, par, solve_model, split_at_interface, ModelKind,
    ScanPoint, ScanResult, SolveOptions, SolutionField, SubdomainSplit, TensorMesh,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, InterfaceSpec, MeshSpec, Study};
use crate::rows::{ResultRow, Status};
use crate::svg::{LinePlot, Series};
use crate::CliError;

/// Everything a study produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Value,
    pub plots: Vec<(String, LinePlot)>,
}

#[derive(Debug, Clone)]
struct Job {
    model: ModelKind,
    mesh: MeshSpec,
    eps_min: f64,
    interface: Option<InterfaceSpec>,
    required: bool,
}

pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyOutput, CliError> {
    cfg.validate()?;
    match cfg.study {
        Study::Solve | Study::Convergence | Study::Efficiency => {
            let jobs = grid_jobs(cfg, &[cfg.setup.eps_min], |_| true);
            let rows = par::map_slice(&jobs, |j| execute(cfg, j));
            let meshes = mesh_h(cfg)?;
            let summary = convergence_summary(cfg, &rows, &meshes);
            let plots = if cfg.study == Study::Efficiency {
                vec![("nnz.svg".into(), per_model_plot(cfg, &rows, &meshes, "nonzeros vs h", "nnz", |r| r.nnz.map(|n| n as f64)))]
            } else {
                vec![
                    ("errors_h1.svg".into(), per_model_plot(cfg, &rows, &meshes, "relative H1 error vs h", "rel_h1", |r| r.rel_h1)),
                    ("errors_l2.svg".into(), per_model_plot(cfg, &rows, &meshes, "relative L2 error vs h", "rel_l2", |r| r.rel_l2)),
                ]
            };
            Ok(StudyOutput { rows, summary, plots })
        }
        Study::Conditioning => {
            // the direct model is expected to degrade; only the
            // reformulations are mandatory
            let jobs = grid_jobs(cfg, &cfg.eps_min_sweep, |m| m != ModelKind::P);
            let rows = par::map_slice(&jobs, |j| execute(cfg, j));
            Ok(conditioning_output(cfg, rows))
        }
        Study::InterfaceScan => interface_scan(cfg),
        Study::TheoremFits => theorem_fits(cfg),
    }
}

fn grid_jobs(cfg: &ExperimentConfig, floors: &[f64], required: impl Fn(ModelKind) -> bool) -> Vec<Job> {
    let models = cfg.model_kinds().unwrap_or_default();
    let mut jobs = Vec::new();
    for mesh in &cfg.meshes {
        for &eps_min in floors {
            for &model in &models {
                let interface = if model == ModelKind::APL { cfg.interface } else { None };
                jobs.push(Job { model, mesh: *mesh, eps_min, interface, required: required(model) });
            }
        }
    }
    jobs
}

fn mesh_h(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    cfg.meshes.iter().map(|m| Ok(m.build(cfg.setup.domain.domain())?.h())).collect()
}

fn options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        quadrature: cfg.quadrature,
        estimate_condition: cfg.estimate_condition || cfg.study == Study::Conditioning,
        ..Default::default()
    }
}

fn execute(cfg: &ExperimentConfig, job: &Job) -> ResultRow {
    let (nx, nz) = job.mesh.nodes();
    let mut row = ResultRow::new(cfg.study.as_str(), job.model, nx, nz, job.eps_min, cfg.setup.eps_max);
    row.required = job.required;
    match fill(cfg, job, &mut row) {
        Ok(_) => row,
        Err(e) => row.fail(e.to_string()),
    }
}

fn prepare(
    cfg: &ExperimentConfig,
    mesh: &MeshSpec,
    eps_min: f64,
    interface: Option<InterfaceSpec>,
) -> Result<(aniso_hybrid::ManufacturedProblem, TensorMesh, Option<SubdomainSplit>), CliError> {
    let problem = cfg.setup.problem(eps_min)?;
    let mesh = mesh.build(problem.domain)?;
    let split = match interface {
        Some(spec) => Some(split_at_interface(&mesh, spec.resolve(&mesh, &problem.eps)?)?),
        None => None,
    };
    Ok((problem, mesh, split))
}

fn fill(cfg: &ExperimentConfig, job: &Job, row: &mut ResultRow) -> Result<Option<SolutionField>, CliError> {
    let (problem, mesh, split) = prepare(cfg, &job.mesh, job.eps_min, job.interface)?;
    if let Some(s) = &split {
        row.iota = Some(s.iota);
        row.eps_iota = Some(problem.eps.eval(s.z_iota));
    }
    let keep_time = |t: f64| cfg.timings.then_some(t);
    if cfg.assemble_only && cfg.study == Study::Efficiency {
        let t = Instant::now();
        let sys = build_system(job.model, &mesh, split.as_ref(), &problem, cfg.quadrature)?;
        row.assemble_s = keep_time(t.elapsed().as_secs_f64());
        let stats = sys.stats();
        row.rows = Some(stats.rows);
        row.nnz = Some(stats.nnz);
        return Ok(None);
    }
    let out = solve_model(job.model, &mesh, split.as_ref(), &problem, &options(cfg))?;
    let rep = out.report;
    let err = error_norms(&out.field, &problem);
    row.rows = Some(rep.stats.rows);
    row.nnz = Some(rep.stats.nnz);
    row.cond_estimate = rep.cond_skeel;
    row.cond1_estimate = rep.cond1;
    row.rel_l2 = Some(err.rel_l2);
    row.rel_h1 = Some(err.rel_h1);
    row.assemble_s = keep_time(rep.assemble_seconds);
    row.factor_s = keep_time(rep.factor_seconds);
    row.solve_s = keep_time(rep.solve_seconds);
    if rep.breakdown {
        row.status = Status::Breakdown;
        row.message = Some(format!("relative residual {:e}", rep.rel_residual));
    }
    Ok(Some(out.field))
}

fn ok_value(r: &ResultRow, f: impl Fn(&ResultRow) -> Option<f64>) -> Option<f64> {
    (r.status != Status::Failed).then(|| f(r)).flatten().filter(|v| v.is_finite())
}

fn per_model_plot(
    cfg: &ExperimentConfig,
    rows: &[ResultRow],
    h: &[f64],
    title: &str,
    y_label: &str,
    f: impl Fn(&ResultRow) -> Option<f64>,
) -> LinePlot {
    let models = cfg.model_kinds().unwrap_or_default();
    let series = models
        .iter()
        .map(|&m| Series {
            name: m.as_str().into(),
            points: rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.model == m)
                .filter_map(|(i, r)| ok_value(r, &f).map(|v| (h[i / models.len()], v)))
                .collect(),
        })
        .collect();
    LinePlot { title: title.into(), x_label: "h".into(), y_label: y_label.into(), log_x: true, log_y: true, series }
}

fn convergence_summary(cfg: &ExperimentConfig, rows: &[ResultRow], h: &[f64]) -> Value {
    let models = cfg.model_kinds().unwrap_or_default();
    let mut per_model = serde_json::Map::new();
    for (mi, m) in models.iter().enumerate() {
        let pick = |f: fn(&ResultRow) -> Option<f64>| -> Option<f64> {
            let pairs: Vec<(f64, f64)> = (0..h.len())
                .map(|k| (h[k], ok_value(&rows[k * models.len() + mi], f)))
                .map(|(hk, v)| v.map(|v| (hk, v)))
                .collect::<Option<_>>()?;
            if pairs.len() < 2 {
                return None;
            }
            eoc(&pairs).ok()
        };
        per_model.insert(
            m.as_str().into(),
            json!({ "eoc_h1": pick(|r| r.rel_h1), "eoc_l2": pick(|r| r.rel_l2) }),
        );
    }
    json!({ "study": cfg.study.as_str(), "h": h, "models": per_model })
}

fn conditioning_output(cfg: &ExperimentConfig, rows: Vec<ResultRow>) -> StudyOutput {
    let models = cfg.model_kinds().unwrap_or_default();
    let mut per_mesh = Vec::new();
    let mut plots = Vec::new();
    let block = models.len() * cfg.eps_min_sweep.len();
    for (mi, mesh) in cfg.meshes.iter().enumerate() {
        let chunk = &rows[mi * block..(mi + 1) * block];
        let (nx, nz) = mesh.nodes();
        let mut summary = serde_json::Map::new();
        let mut cond_series = Vec::new();
        let mut cond1_series = Vec::new();
        let mut err_series = Vec::new();
        for (k, m) in models.iter().enumerate() {
            let of_model: Vec<&ResultRow> = chunk.iter().skip(k).step_by(models.len()).collect();
            let series = |f: fn(&ResultRow) -> Option<f64>| -> Vec<(f64, f64)> {
                of_model.iter().filter_map(|r| ok_value(r, f).map(|v| (r.eps_min, v))).collect()
            };
            let skeel = series(|r| r.cond_estimate);
            let cond1 = series(|r| r.cond1_estimate);
            let err = series(|r| r.rel_l2);
            let orders = |s: &[(f64, f64)]| -> Option<f64> {
                let lo = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                (s.len() > 1).then(|| (hi / lo).log10())
            };
            let err_ratio = match (err.first(), err.last()) {
                (Some(a), Some(b)) if err.len() > 1 => Some(b.1 / a.1),
                _ => None,
            };
            summary.insert(
                m.as_str().into(),
                json!({
                    "cond_orders": orders(&skeel),
                    "cond1_orders": orders(&cond1),
                    "error_ratio_last_first": err_ratio,
                }),
            );
            cond_series.push(Series { name: m.as_str().into(), points: skeel });
            cond1_series.push(Series { name: m.as_str().into(), points: cond1 });
            err_series.push(Series { name: m.as_str().into(), points: err });
        }
        per_mesh.push(json!({ "nx": nx, "nz": nz, "models": summary }));
        let plot = |title: &str, y: &str, series| LinePlot {
            title: format!("{title}, {nx}x{nz} nodes"),
            x_label: "eps_min".into(),
            y_label: y.into(),
            log_x: true,
            log_y: true,
            series,
        };
        plots.push((format!("condition_{nx}x{nz}.svg"), plot("componentwise condition", "cond_estimate", cond_series)));
        plots.push((format!("cond1_{nx}x{nz}.svg"), plot("1-norm condition", "cond1_estimate", cond1_series)));
        plots.push((format!("errors_{nx}x{nz}.svg"), plot("relative L2 error", "rel_l2", err_series)));
    }
    StudyOutput { rows, summary: json!({ "study": "conditioning", "meshes": per_mesh }), plots }
}

fn interface_scan(cfg: &ExperimentConfig) -> Result<StudyOutput, CliError> {
    let mut jobs = Vec::new();
    let mut spans = Vec::new();
    for mesh in &cfg.meshes {
        let (_, m, _) = prepare(cfg, mesh, cfg.setup.eps_min, None)?;
        let eps = cfg.setup.profile_with_floor(cfg.setup.eps_min)?;
        let rows = cfg.scan_rows(&m, &eps);
        if rows.is_empty() {
            return Err(CliError::Invalid(format!("no interface rows to scan on mesh {mesh:?}")));
        }
        let start = jobs.len();
        for k in rows.into_iter().rev() {
            jobs.push(Job {
                model: ModelKind::APL,
                mesh: *mesh,
                eps_min: cfg.setup.eps_min,
                interface: Some(InterfaceSpec::Iota(k)),
                required: false,
            });
        }
        spans.push((m.h(), start..jobs.len()));
    }
    let rows = par::map_slice(&jobs, |j| execute(cfg, j));
    let mut per_mesh = Vec::new();
    let mut curves = Vec::new();
    let mut stars = Vec::new();
    for ((h, span), mesh) in spans.into_iter().zip(&cfg.meshes) {
        let (nx, nz) = mesh.nodes();
        let points: Vec<ScanPoint> = rows[span]
            .iter()
            .filter(|r| r.status == Status::Ok)
            .filter_map(|r| {
                Some(ScanPoint { iota: r.iota?, eps_iota: r.eps_iota?, rel_l2: r.rel_l2?, rel_h1: r.rel_h1? })
            })
            .collect();
        let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.eps_iota, p.rel_h1)).collect();
        curves.push(Series { name: format!("{nx}x{nz}"), points: curve });
        match ScanResult::from_points(points, cfg.plateau_tol) {
            Ok(s) => {
                stars.push((h, s.eps_star));
                per_mesh.push(json!({
                    "nx": nx, "nz": nz, "h": h,
                    "eps_star": s.eps_star, "iota_star": s.iota_star, "min_error": s.min_error,
                    "tail_on_plateau": s.tail_on_plateau(3), "starts_above_plateau": s.starts_above_plateau(),
                }));
            }
            Err(e) => per_mesh.push(json!({ "nx": nx, "nz": nz, "h": h, "error": e.to_string() })),
        }
    }
    let plots = vec![
        (
            "scan.svg".into(),
            LinePlot {
                title: "hybrid error vs interface anisotropy".into(),
                x_label: "eps(z_iota)".into(),
                y_label: "rel_h1".into(),
                log_x: true,
                log_y: true,
                series: curves,
            },
        ),
        (
            "eps_star.svg".into(),
            LinePlot {
                title: "plateau onset vs h".into(),
                x_label: "h".into(),
                y_label: "eps_star".into(),
                log_x: true,
                log_y: true,
                series: vec![Series { name: "eps_star".into(), points: stars }],
            },
        ),
    ];
    Ok(StudyOutput { rows, summary: json!({ "study": "interface-scan", "meshes": per_mesh }), plots })
}

fn theorem_fits(cfg: &ExperimentConfig) -> Result<StudyOutput, CliError> {
    let mut rows = Vec::new();
    let mut per_mesh = Vec::new();
    let mut plots = Vec::new();
    for mesh in &cfg.meshes {
        let (nx, nz) = mesh.nodes();
        let (problem, m, _) = prepare(cfg, mesh, cfg.setup.eps_min, None)?;
        let ap_job = Job { model: ModelKind::AP, mesh: *mesh, eps_min: cfg.setup.eps_min, interface: None, required: true };
        let mut ap_row = ResultRow::new(cfg.study.as_str(), ModelKind::AP, nx, nz, cfg.setup.eps_min, cfg.setup.eps_max);
        let ap = match fill(cfg, &ap_job, &mut ap_row) {
            Ok(Some(f)) => f,
            Ok(None) => unreachable!("solve path always returns a field"),
            Err(e) => {
                rows.push(ap_row.fail(e.to_string()));
                continue;
            }
        };
        rows.push(ap_row);
        let ap_abs_h1 = error_norms(&ap, &problem).abs_h1;

        let iotas: Vec<usize> = cfg.scan_rows(&m, &problem.eps).into_iter().rev().collect();
        let results = par::map_slice(&iotas, |&k| {
            let job = Job {
                model: ModelKind::APL,
                mesh: *mesh,
                eps_min: cfg.setup.eps_min,
                interface: Some(InterfaceSpec::Iota(k)),
                required: false,
            };
            let mut row =
                ResultRow::new(cfg.study.as_str(), ModelKind::APL, nx, nz, cfg.setup.eps_min, cfg.setup.eps_max);
            row.required = false;
            let measured = fill(cfg, &job, &mut row).and_then(|apl| {
                let split = split_at_interface(&m, k)?;
                let xi = derive_xi2(&ap, &split)?.gradient_norms();
                let d = ess_distance(&ap, &apl.expect("solve path always returns a field"), &split)?;
                Ok((problem.eps.eval(split.z_iota), xi.0, xi.1, d))
            });
            match measured {
                Ok(v) => (row, Some(v)),
                Err(e) => (row.fail(e.to_string()), None),
            }
        });
        let pts: Vec<(f64, f64, f64, f64)> = results.iter().filter_map(|r| r.1).collect();
        rows.extend(results.into_iter().map(|r| r.0));
        let col = |f: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<(f64, f64)> { pts.iter().map(|p| (p.0, f(p))).collect() };
        let slope = |s: &[(f64, f64)]| if s.len() > 1 { eoc(s).ok() } else { None };
        let (dx, dz, dist) = (col(|p| p.1), col(|p| p.2), col(|p| p.3));
        per_mesh.push(json!({
            "nx": nx, "nz": nz,
            "eps": pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            "xi2_dx": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            "xi2_dz": pts.iter().map(|p| p.2).collect::<Vec<_>>(),
            "ess_distance": pts.iter().map(|p| p.3).collect::<Vec<_>>(),
            "slope_xi2_dx": slope(&dx), "slope_xi2_dz": slope(&dz), "slope_ess": slope(&dist),
            "ap_abs_h1_error": ap_abs_h1,
        }));
        let plot = |title: &str, y: &str, series| LinePlot {
            title: format!("{title}, {nx}x{nz} nodes"),
            x_label: "eps(z_iota)".into(),
            y_label: y.into(),
            log_x: true,
            log_y: true,
            series,
        };
        plots.push((
            format!("xi2_norms_{nx}x{nz}.svg"),
            plot(
                "lower-fluctuation seminorms",
                "norm",
                vec![Series { name: "dx".into(), points: dx }, Series { name: "dz".into(), points: dz }],
            ),
        ));
        plots.push((
            format!("ess_distance_{nx}x{nz}.svg"),
            plot("hybrid to full distance", "distance", vec![Series { name: "apl-ap".into(), points: dist }]),
        ));
    }
    Ok(StudyOutput { rows, summary: json!({ "study": "theorem-fits", "meshes": per_mesh }), plots })
}
