//! Error norms, convergence slopes, interface scans and the lifting and
//! distance sweeps used to probe the hybrid model.

use crate::error::{Error, Result};
use crate::mesh::{split_at_interface, SubdomainSplit, TensorMesh};
use crate::models::{derive_xi2, q1_norms, solve_model, ModelKind, SolutionField, SolveOptions};
use crate::par;
use crate::problem::ManufacturedProblem;
use crate::quadrature::gauss_rule;

/// Errors of a discrete field against the exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub model: ModelKind,
    /// `(dx dz)^(1/2)`.
    pub h: f64,
    pub rel_l2: f64,
    /// Relative full `H1` norm (`L2` plus gradient).
    pub rel_h1: f64,
    pub abs_l2: f64,
    pub abs_h1: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    /// `eps(z_iota)` for hybrid fields.
    pub eps_iota: Option<f64>,
}

/// Cell-wise 3x3 Gauss evaluation of `|u_h - u_e|^2` and
/// `|grad u_h - grad u_e|^2`, relative to the same norms of `u_e`.
pub fn error_norms(field: &SolutionField, problem: &ManufacturedProblem) -> ErrorReport {
    let mesh = &field.mesh;
    let rule = gauss_rule(3).expect("3-point rule");
    let (hx, hz) = (mesh.dx, mesh.dz);
    let cols = par::map_range(mesh.nx + 1, |ix| {
        let mut acc = [0.0f64; 4];
        for kz in 0..=mesh.nz {
            let c = [field.value(ix, kz), field.value(ix + 1, kz), field.value(ix, kz + 1), field.value(ix + 1, kz + 1)];
            for (p, &wp) in rule.points.iter().zip(&rule.weights) {
                let s = 0.5 * (1.0 + p);
                let x = mesh.x_nodes[ix] + s * hx;
                for (q, &wq) in rule.points.iter().zip(&rule.weights) {
                    let t = 0.5 * (1.0 + q);
                    let z = mesh.z_nodes[kz] + t * hz;
                    let w = wp * wq * 0.25 * hx * hz;
                    let uh = c[0] * (1.0 - s) * (1.0 - t) + c[1] * s * (1.0 - t) + c[2] * (1.0 - s) * t + c[3] * s * t;
                    let gx = ((c[1] - c[0]) * (1.0 - t) + (c[3] - c[2]) * t) / hx;
                    let gz = ((c[2] - c[0]) * (1.0 - s) + (c[3] - c[1]) * s) / hz;
                    let ue = problem.u_exact(x, z);
                    let ge = problem.grad_u_exact(x, z);
                    acc[0] += w * (uh - ue).powi(2);
                    acc[1] += w * ((gx - ge[0]).powi(2) + (gz - ge[1]).powi(2));
                    acc[2] += w * ue * ue;
                    acc[3] += w * (ge[0] * ge[0] + ge[1] * ge[1]);
                }
            }
        }
        acc
    });
    let s = cols.iter().fold([0.0; 4], |mut a, c| {
        (0..4).for_each(|j| a[j] += c[j]);
        a
    });
    let abs_l2 = s[0].sqrt();
    let abs_h1 = (s[0] + s[1]).sqrt();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den.sqrt() } else { num };
    ErrorReport {
        model: field.kind,
        h: mesh.h(),
        rel_l2: ratio(abs_l2, s[2]),
        rel_h1: ratio(abs_h1, s[2] + s[3]),
        abs_l2,
        abs_h1,
        eps_min: problem.eps.eps_min(),
        eps_max: problem.eps.eps_max(),
        eps_iota: field.split.map(|sp| problem.eps.eval(sp.z_iota)),
    }
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 2 {
        return Err(Error::DegenerateInput(format!("{} points, need at least 2", pts.len())));
    }
    if let Some(p) = pts.iter().find(|(x, y)| !(x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0)) {
        return Err(Error::DegenerateInput(format!("non-positive or non-finite point {p:?}")));
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::DegenerateInput("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Empirical order of convergence from `(h, error)` pairs.
pub fn eoc(pairs: &[(f64, f64)]) -> Result<f64> {
    loglog_slope(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub iota: usize,
    pub eps_iota: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
}

/// Hybrid error as a function of the interface position, ordered by
/// decreasing `eps(z_iota)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub plateau_tol: f64,
    /// Largest scanned `eps(z_iota)` whose error is within the plateau
    /// tolerance of the minimum.
    pub eps_star: f64,
    pub iota_star: usize,
    pub min_error: f64,
}

impl ScanResult {
    /// Builds the result from already computed points.
    pub fn from_points(mut points: Vec<ScanPoint>, plateau_tol: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateInput("empty interface candidate set".into()));
        }
        if !(plateau_tol >= 0.0) {
            return Err(Error::DegenerateInput(format!("plateau tolerance {plateau_tol}")));
        }
        if let Some(p) = points.iter().find(|p| !p.rel_h1.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite error at iota={}", p.iota)));
        }
        points.sort_by(|a, b| b.eps_iota.total_cmp(&a.eps_iota));
        let min_error = points.iter().map(|p| p.rel_h1).fold(f64::INFINITY, f64::min);
        let limit = (1.0 + plateau_tol) * min_error;
        let star = points.iter().find(|p| p.rel_h1 <= limit).expect("the minimum qualifies");
        Ok(Self { eps_star: star.eps_iota, iota_star: star.iota, min_error, plateau_tol, points })
    }

    /// Whether the `n` smallest-`eps` points lie within the plateau.
    pub fn tail_on_plateau(&self, n: usize) -> bool {
        let limit = (1.0 + self.plateau_tol) * self.min_error;
        n <= self.points.len() && self.points[self.points.len() - n..].iter().all(|p| p.rel_h1 <= limit)
    }

    /// Whether the largest-`eps` point lies clearly above the plateau.
    pub fn starts_above_plateau(&self) -> bool {
        self.points[0].rel_h1 > (1.0 + self.plateau_tol) * self.min_error
    }
}

/// Solves the hybrid model for every candidate interface and locates the
/// largest `eps(z_iota)` that keeps the error on its plateau.
pub fn interface_scan(
    mesh: &TensorMesh,
    problem: &ManufacturedProblem,
    iota_candidates: &[usize],
    plateau_tol: f64,
    opts: &SolveOptions,
) -> Result<ScanResult> {
    if iota_candidates.is_empty() {
        return Err(Error::DegenerateInput("empty interface candidate set".into()));
    }
    let points = par::map_slice(iota_candidates, |&iota| -> Result<ScanPoint> {
        let split = split_at_interface(mesh, iota)?;
        let out = solve_model(ModelKind::APL, mesh, Some(&split), problem, opts)?;
        let e = error_norms(&out.field, problem);
        Ok(ScanPoint { iota, eps_iota: problem.eps.eval(split.z_iota), rel_l2: e.rel_l2, rel_h1: e.rel_h1 })
    });
    ScanResult::from_points(points.into_iter().collect::<Result<Vec<_>>>()?, plateau_tol)
}

fn check_sweep(eps: &[f64], decades: f64) -> Result<()> {
    let (lo, hi) = eps.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    if eps.len() < 2 || !(lo > 0.0) || (hi / lo).log10() < decades {
        return Err(Error::DegenerateInput(format!(
            "interface sweep covers eps in [{lo:e}, {hi:e}], need at least {decades} decades"
        )));
    }
    Ok(())
}

/// Whether `v` (ordered by decreasing `eps`) never grows by more than `noise`.
fn non_increasing(v: &[f64], noise: f64) -> bool {
    v.windows(2).all(|w| w[1] <= (1.0 + noise) * w[0])
}

fn sorted_splits(mesh: &TensorMesh, problem: &ManufacturedProblem, iotas: &[usize]) -> Result<Vec<(SubdomainSplit, f64)>> {
    let mut s = iotas
        .iter()
        .map(|&i| split_at_interface(mesh, i).map(|sp| (sp, problem.eps.eval(sp.z_iota))))
        .collect::<Result<Vec<_>>>()?;
    s.sort_by(|a, b| b.1.total_cmp(&a.1));
    check_sweep(&s.iter().map(|p| p.1).collect::<Vec<_>>(), 3.0)?;
    Ok(s)
}

/// Lifting seminorms along an interface sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Fit {
    /// Sweep ordered by decreasing `eps(z_iota)`.
    pub iotas: Vec<usize>,
    pub eps: Vec<f64>,
    pub norm_dx: Vec<f64>,
    pub norm_dz: Vec<f64>,
    pub slope_dx: f64,
    pub slope_dz: f64,
    /// Both seminorms non-increasing as `eps` decreases, up to 5%.
    pub monotone: bool,
}

/// Noise allowance of the monotonicity checks.
pub const MONOTONE_NOISE: f64 = 0.05;

/// One full-domain asymptotic-preserving solve, lifted below each interface
/// of the sweep.
pub fn theorem1_fit(
    mesh: &TensorMesh,
    problem: &ManufacturedProblem,
    iotas: &[usize],
    opts: &SolveOptions,
) -> Result<Theorem1Fit> {
    let splits = sorted_splits(mesh, problem, iotas)?;
    let ap = solve_model(ModelKind::AP, mesh, None, problem, opts)?.field;
    let norms = par::map_slice(&splits, |(s, _)| derive_xi2(&ap, s).map(|xi| xi.gradient_norms()));
    let norms = norms.into_iter().collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = splits.iter().map(|s| s.1).collect();
    let norm_dx: Vec<f64> = norms.iter().map(|n| n.0).collect();
    let norm_dz: Vec<f64> = norms.iter().map(|n| n.1).collect();
    let pair = |v: &[f64]| eps.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    Ok(Theorem1Fit {
        iotas: splits.iter().map(|s| s.0.iota).collect(),
        slope_dx: loglog_slope(&pair(&norm_dx))?,
        slope_dz: loglog_slope(&pair(&norm_dz))?,
        monotone: non_increasing(&norm_dx, MONOTONE_NOISE) && non_increasing(&norm_dz, MONOTONE_NOISE),
        eps,
        norm_dx,
        norm_dz,
    })
}

/// `||dx(mean_a - mean_b)||_{L2(x)} + ||dx(u'_a - u'_b)||_{L2(upper)} +
/// ||dz(u'_a - u'_b)||_{L2(upper)}`.
pub fn ess_distance(a: &SolutionField, b: &SolutionField, split: &SubdomainSplit) -> Result<f64> {
    if a.mesh != b.mesh {
        return Err(Error::MeshMismatch("fields live on different meshes".into()));
    }
    let mesh = &a.mesh;
    let dm: f64 = (0..=mesh.nx)
        .map(|i| {
            let d = (a.mean[i + 1] - b.mean[i + 1]) - (a.mean[i] - b.mean[i]);
            d * d / mesh.dx
        })
        .sum();
    let n = q1_norms(mesh, split.upper_cells(mesh), &|i, k| a.fluct_at(i, k) - b.fluct_at(i, k));
    Ok(dm.sqrt() + n.dx.sqrt() + n.dz.sqrt())
}

/// Hybrid-versus-full distances along an interface sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Fit {
    /// Sweep ordered by decreasing `eps(z_iota)`.
    pub iotas: Vec<usize>,
    pub eps: Vec<f64>,
    pub distance: Vec<f64>,
    pub slope: f64,
    /// Absolute `H1` error of the full-domain solution.
    pub ap_error: f64,
}

pub fn theorem2_fit(
    mesh: &TensorMesh,
    problem: &ManufacturedProblem,
    iotas: &[usize],
    opts: &SolveOptions,
) -> Result<Theorem2Fit> {
    let splits = sorted_splits(mesh, problem, iotas)?;
    let ap = solve_model(ModelKind::AP, mesh, None, problem, opts)?.field;
    let dist = par::map_slice(&splits, |(s, _)| {
        let apl = solve_model(ModelKind::APL, mesh, Some(s), problem, opts)?.field;
        ess_distance(&ap, &apl, s)
    });
    let distance = dist.into_iter().collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = splits.iter().map(|s| s.1).collect();
    let pts: Vec<(f64, f64)> = eps.iter().copied().zip(distance.iter().copied()).collect();
    Ok(Theorem2Fit {
        iotas: splits.iter().map(|s| s.0.iota).collect(),
        slope: loglog_slope(&pts)?,
        ap_error: error_norms(&ap, problem).abs_h1,
        eps,
        distance,
    })
}
