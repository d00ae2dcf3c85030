//! Finite element assembly of the bilinear forms and load vectors.
//!
//! Fluctuations live in the Q1 space on the nodes of a z-range of the mesh;
//! means and Lagrange multipliers live in the P1 space of the interior
//! x-nodes. Dirichlet nodes `i = 0` and `i = nx + 1` carry no unknowns.
//!
//! | form        | integrand                                   | rows  | cols  |
//! |-------------|---------------------------------------------|-------|-------|
//! | `Az(s)`     | `A_z/eps dz(v') dz(psi')`                   | fluct | fluct |
//! | `AxF(s)`    | `A_x dx(v') dx(psi')`                       | fluct | fluct |
//! | `AxA`       | `mean(A_x) dx(v) dx(psi)` (1D)              | mean  | mean  |
//! | `Bl(s)`     | `P psi' / eps`                              | fluct | mult  |
//! | `Bc(s)`     | `Q v' / L_z`                                | mult  | fluct |
//! | `Cf(s)`     | `A_x dx(v) dx(psi')`                        | fluct | mean  |
//! | `Ca(s)`     | `(A_x - mean(A_x)) dx(v') dx(psi)`          | mean  | fluct |
//!
//! Entries whose supports overlap are always stored, even when the integral
//! is exactly zero, so the sparsity pattern depends on the mesh only.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::mesh::{SubdomainSplit, TensorMesh};
use crate::par;
use crate::problem::ManufacturedProblem;
use crate::quadrature::{gauss_rule, p1_eval, QuadratureRule1D};
use crate::sparse::SparseMatrix;

/// Vertical extent of a form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sub {
    /// Above the interface, nodes `iota..=nz+1`.
    One,
    /// Below the interface, nodes `0..=iota`.
    Two,
    /// Whole z-interval.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormId {
    Az(Sub),
    AxF(Sub),
    AxA,
    Bl(Sub),
    Bc(Sub),
    Cf(Sub),
    Ca(Sub),
    /// Interface flux pairing. Listed for completeness; never assembled.
    DIota,
}

impl FormId {
    pub fn name(&self) -> &'static str {
        match self {
            FormId::Az(_) => "a_z",
            FormId::AxF(_) => "a_xf",
            FormId::AxA => "a_xa",
            FormId::Bl(_) => "b_l",
            FormId::Bc(_) => "b_c",
            FormId::Cf(_) => "c_f",
            FormId::Ca(_) => "c_a",
            FormId::DIota => "d_iota",
        }
    }

    fn sub(&self) -> Option<Sub> {
        match *self {
            FormId::Az(s) | FormId::AxF(s) | FormId::Bl(s) | FormId::Bc(s) | FormId::Cf(s) | FormId::Ca(s) => Some(s),
            FormId::AxA | FormId::DIota => None,
        }
    }
}

/// Unknown numbering of a block system `(mean, fluctuation, multiplier)`.
///
/// Fluctuation dofs are ordered x-major: `(1, k_first), .., (1, k_last),
/// (2, k_first), ..`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub nx: usize,
    pub k_first: usize,
    pub k_last: usize,
    /// Interface row when the layout belongs to a split model.
    pub iota: Option<usize>,
}

impl DofLayout {
    pub fn for_sub(mesh: &TensorMesh, sub: Sub, split: Option<&SubdomainSplit>) -> Result<Self> {
        let nx = mesh.nx;
        match sub {
            Sub::Full => Ok(Self { nx, k_first: 0, k_last: mesh.nz + 1, iota: split.map(|s| s.iota) }),
            Sub::One => {
                let s = split.ok_or(Error::MissingSplit("upper subdomain layout"))?;
                Ok(Self { nx, k_first: s.iota, k_last: mesh.nz + 1, iota: Some(s.iota) })
            }
            Sub::Two => {
                let s = split.ok_or(Error::MissingSplit("lower subdomain layout"))?;
                Ok(Self { nx, k_first: 0, k_last: s.iota, iota: Some(s.iota) })
            }
        }
    }

    pub fn z_count(&self) -> usize {
        self.k_last + 1 - self.k_first
    }

    pub fn n_mean(&self) -> usize {
        self.nx
    }

    pub fn n_fluct(&self) -> usize {
        self.nx * self.z_count()
    }

    pub fn n_mult(&self) -> usize {
        self.nx
    }

    pub fn total(&self) -> usize {
        self.n_mean() + self.n_fluct() + self.n_mult()
    }

    /// Block sizes `[mean, fluct, mult]`.
    pub fn block_sizes(&self) -> [usize; 3] {
        [self.n_mean(), self.n_fluct(), self.n_mult()]
    }

    #[inline]
    pub fn fluct_index(&self, i: usize, k: usize) -> Option<usize> {
        if i == 0 || i > self.nx || k < self.k_first || k > self.k_last {
            None
        } else {
            Some((i - 1) * self.z_count() + (k - self.k_first))
        }
    }

    /// Inverse of [`fluct_index`](Self::fluct_index).
    pub fn fluct_node(&self, idx: usize) -> (usize, usize) {
        (idx / self.z_count() + 1, self.k_first + idx % self.z_count())
    }

    /// Index of the P1 mean (or multiplier) dof at x-node `i`.
    #[inline]
    pub fn mean_index(&self, i: usize) -> Option<usize> {
        if i == 0 || i > self.nx {
            None
        } else {
            Some(i - 1)
        }
    }

    /// Fluctuation dofs on the interface row.
    pub fn trace_dofs(&self) -> Vec<usize> {
        match self.iota {
            Some(iota) => (1..=self.nx).filter_map(|i| self.fluct_index(i, iota)).collect(),
            None => Vec::new(),
        }
    }
}

/// Which fluctuation load vector to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsVariant {
    P,
    AP,
    APL,
}

/// Reusable assembly context: quadrature, cached z-averages of `A_x` and
/// the anisotropy ratio at the z quadrature points.
#[derive(Debug, Clone)]
pub struct Assembler<'a> {
    mesh: &'a TensorMesh,
    problem: &'a ManufacturedProblem,
    split: Option<SubdomainSplit>,
    rule: QuadratureRule1D,
    /// P1 values of the left/right node at each reference point.
    shape: Vec<[f64; 2]>,
    /// `mean(A_x)` at every x quadrature point, `(nx+1) * nq`.
    abar: Vec<f64>,
    /// `1/eps` at every z quadrature point, `(nz+1) * nq`.
    inv_eps: Vec<f64>,
    serial: bool,
}

type Triplets = Vec<(usize, usize, f64)>;

impl<'a> Assembler<'a> {
    /// Context with the default 3-point rule per direction.
    pub fn new(mesh: &'a TensorMesh, problem: &'a ManufacturedProblem, split: Option<SubdomainSplit>) -> Result<Self> {
        Self::with_order(mesh, problem, split, 3)
    }

    pub fn with_order(
        mesh: &'a TensorMesh,
        problem: &'a ManufacturedProblem,
        split: Option<SubdomainSplit>,
        order: usize,
    ) -> Result<Self> {
        if mesh.domain != problem.domain {
            return Err(Error::MeshMismatch("mesh and problem are posed on different domains".into()));
        }
        if let Some(s) = split {
            if s.iota == 0 || s.iota > mesh.nz || s.z_iota != mesh.z_nodes[s.iota] {
                return Err(Error::DegenerateSplit(format!("split at {} does not belong to the mesh", s.iota)));
            }
        }
        let rule = gauss_rule(order)?;
        let shape: Vec<[f64; 2]> = rule.points.iter().map(|&p| p1_eval(p).values).collect();
        let nq = rule.len();
        let mut inv_eps = Vec::with_capacity((mesh.nz + 1) * nq);
        for kz in 0..=mesh.nz {
            for (z, _) in rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                let e = problem.eps.eval(z);
                if !(e > 0.0 && e.is_finite()) {
                    return Err(Error::NonPositiveEps { value: e, z });
                }
                inv_eps.push(1.0 / e);
            }
        }
        let lz = mesh.domain.lz();
        let mut abar = Vec::with_capacity((mesh.nx + 1) * nq);
        for ix in 0..=mesh.nx {
            for (x, _) in rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]) {
                let mut s = 0.0;
                for kz in 0..=mesh.nz {
                    for (z, w) in rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                        s += w * problem.a_x(x, z);
                    }
                }
                abar.push(s / lz);
            }
        }
        Ok(Self { mesh, problem, split, rule, shape, abar, inv_eps, serial: false })
    }

    /// Forces single-threaded cell loops (results are identical either way).
    pub fn serial(mut self, serial: bool) -> Self {
        self.serial = serial;
        self
    }

    pub fn mesh(&self) -> &TensorMesh {
        self.mesh
    }

    pub fn split(&self) -> Option<&SubdomainSplit> {
        self.split.as_ref()
    }

    pub fn quadrature(&self) -> &QuadratureRule1D {
        &self.rule
    }

    /// `mean(A_x)` at quadrature point `p` of x-cell `ix`.
    pub fn abar_at(&self, ix: usize, p: usize) -> f64 {
        self.abar[ix * self.rule.len() + p]
    }

    pub fn layout(&self, sub: Sub) -> Result<DofLayout> {
        DofLayout::for_sub(self.mesh, sub, self.split.as_ref())
    }

    fn cell_range(&self, sub: Sub) -> Result<Range<usize>> {
        match sub {
            Sub::Full => Ok(0..self.mesh.nz + 1),
            Sub::One => Ok(self.split.ok_or(Error::MissingSplit("upper subdomain"))?.upper_cells(self.mesh)),
            Sub::Two => Ok(self.split.ok_or(Error::MissingSplit("lower subdomain"))?.lower_cells()),
        }
    }

    fn collect(&self, chunk: impl Fn(usize) -> Triplets + Sync + Send) -> Triplets {
        let n = self.mesh.nx + 1;
        let parts = if self.serial { par::map_range_serial(n, chunk) } else { par::map_range(n, chunk) };
        parts.concat()
    }

    /// Quadrature points of cell `(ix, kz)`:
    /// `(p, q, x, z, weight, 1/eps)`.
    #[inline]
    fn cell_points(&self, ix: usize, kz: usize) -> impl Iterator<Item = (usize, usize, f64, f64, f64, f64)> + '_ {
        let nq = self.rule.len();
        let (x0, x1) = (self.mesh.x_nodes[ix], self.mesh.x_nodes[ix + 1]);
        let (z0, z1) = (self.mesh.z_nodes[kz], self.mesh.z_nodes[kz + 1]);
        let (hx, hz) = (0.5 * (x1 - x0), 0.5 * (z1 - z0));
        let (mx, mz) = (0.5 * (x0 + x1), 0.5 * (z0 + z1));
        (0..nq).flat_map(move |q| {
            let z = mz + hz * self.rule.points[q];
            let wz = hz * self.rule.weights[q];
            let ie = self.inv_eps[kz * nq + q];
            (0..nq).map(move |p| {
                let x = mx + hx * self.rule.points[p];
                (p, q, x, z, self.rule.weights[p] * hx * wz, ie)
            })
        })
    }

    /// Assembles one bilinear form.
    pub fn form(&self, form: FormId) -> Result<SparseMatrix> {
        let mesh = self.mesh;
        let nx = mesh.nx;
        if form == FormId::DIota {
            return Err(Error::NotAssembled("d_iota"));
        }
        if form == FormId::AxA {
            return self.form_axa();
        }
        let sub = form.sub().expect("2D forms carry a subdomain");
        let layout = self.layout(sub)?;
        let cells = self.cell_range(sub)?;
        let nf = layout.n_fluct();
        let (rows, cols) = match form {
            FormId::Az(_) | FormId::AxF(_) => (nf, nf),
            FormId::Bl(_) | FormId::Cf(_) => (nf, nx),
            FormId::Bc(_) | FormId::Ca(_) => (nx, nf),
            FormId::AxA | FormId::DIota => unreachable!(),
        };
        let shape = &self.shape;
        let (idx, idz) = (1.0 / mesh.dx, 1.0 / mesh.dz);
        let dshape = |a: usize, inv_h: f64| if a == 0 { -inv_h } else { inv_h };
        let problem = self.problem;
        let lz = mesh.domain.lz();
        let t = self.collect(|ix| {
            let mut out = Triplets::new();
            for kz in cells.clone() {
                let mut local = [[0.0f64; 4]; 4];
                for (p, q, x, z, w, ie) in self.cell_points(ix, kz) {
                    let (sx, sz) = (shape[p], shape[q]);
                    match form {
                        FormId::Az(_) => {
                            let c = w * problem.a_z(x, z) * ie;
                            for l in 0..4 {
                                let gl = sx[l & 1] * dshape(l >> 1, idz);
                                for m in 0..4 {
                                    local[l][m] += c * gl * sx[m & 1] * dshape(m >> 1, idz);
                                }
                            }
                        }
                        FormId::AxF(_) => {
                            let c = w * problem.a_x(x, z);
                            for l in 0..4 {
                                let gl = dshape(l & 1, idx) * sz[l >> 1];
                                for m in 0..4 {
                                    local[l][m] += c * gl * dshape(m & 1, idx) * sz[m >> 1];
                                }
                            }
                        }
                        // l: fluct corner, m: x-node 0/1 of the P1 function
                        FormId::Bl(_) | FormId::Bc(_) => {
                            let c = if matches!(form, FormId::Bl(_)) { w * ie } else { w / lz };
                            for l in 0..4 {
                                let phi = sx[l & 1] * sz[l >> 1];
                                for m in 0..2 {
                                    local[l][m] += c * phi * sx[m];
                                }
                            }
                        }
                        FormId::Cf(_) | FormId::Ca(_) => {
                            let ax = problem.a_x(x, z);
                            let coef = if matches!(form, FormId::Cf(_)) { ax } else { ax - self.abar_at(ix, p) };
                            let c = w * coef;
                            for l in 0..4 {
                                let gl = dshape(l & 1, idx) * sz[l >> 1];
                                for m in 0..2 {
                                    local[l][m] += c * gl * dshape(m, idx);
                                }
                            }
                        }
                        FormId::AxA | FormId::DIota => unreachable!(),
                    }
                }
                let node = |l: usize| (ix + (l & 1), kz + (l >> 1));
                match form {
                    FormId::Az(_) | FormId::AxF(_) => {
                        for l in 0..4 {
                            let Some(r) = layout.fluct_index(node(l).0, node(l).1) else { continue };
                            for m in 0..4 {
                                if let Some(c) = layout.fluct_index(node(m).0, node(m).1) {
                                    out.push((r, c, local[l][m]));
                                }
                            }
                        }
                    }
                    _ => {
                        let transpose = matches!(form, FormId::Bc(_) | FormId::Ca(_));
                        for l in 0..4 {
                            let Some(f) = layout.fluct_index(node(l).0, node(l).1) else { continue };
                            for m in 0..2 {
                                if let Some(j) = layout.mean_index(ix + m) {
                                    out.push(if transpose { (j, f, local[l][m]) } else { (f, j, local[l][m]) });
                                }
                            }
                        }
                    }
                }
            }
            out
        });
        SparseMatrix::from_triplets(rows, cols, &t)
    }

    fn form_axa(&self) -> Result<SparseMatrix> {
        let mesh = self.mesh;
        let mut t = Triplets::new();
        let idx = 1.0 / mesh.dx;
        for ix in 0..=mesh.nx {
            let mut k = 0.0;
            for (p, (_, w)) in self.rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]).enumerate() {
                k += w * self.abar_at(ix, p) * idx * idx;
            }
            for a in 0..2 {
                let Some(r) = mesh_mean(mesh.nx, ix + a) else { continue };
                for b in 0..2 {
                    if let Some(c) = mesh_mean(mesh.nx, ix + b) {
                        t.push((r, c, if a == b { k } else { -k }));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(mesh.nx, mesh.nx, &t)
    }

    /// Lower-subdomain forms applied to the interface trace `u'(x, z_iota)`,
    /// extended constantly in z. Rows are mean (for `Ca(Two)`) or multiplier
    /// (for `Bc(Two)`) dofs; columns are the trace dofs of the upper layout.
    pub fn expanded_trace(&self, form: FormId) -> Result<SparseMatrix> {
        let split = self.split.ok_or(Error::MissingSplit("expanded trace"))?;
        let is_ca = match form {
            FormId::Ca(Sub::Two) => true,
            FormId::Bc(Sub::Two) => false,
            other => {
                return Err(Error::DegenerateInput(format!("{} has no expanded trace form", other.name())));
            }
        };
        let mesh = self.mesh;
        let layout = self.layout(Sub::One)?;
        let idx = 1.0 / mesh.dx;
        let dshape = |a: usize| if a == 0 { -idx } else { idx };
        let lz = mesh.domain.lz();
        let cells = split.lower_cells();
        let problem = self.problem;
        let shape = &self.shape;
        let t = self.collect(|ix| {
            let mut local = [[0.0f64; 2]; 2];
            for kz in cells.clone() {
                for (p, _q, x, z, w, _) in self.cell_points(ix, kz) {
                    let sx = shape[p];
                    for a in 0..2 {
                        for b in 0..2 {
                            local[a][b] += if is_ca {
                                w * (problem.a_x(x, z) - self.abar_at(ix, p)) * dshape(a) * dshape(b)
                            } else {
                                w / lz * sx[a] * sx[b]
                            };
                        }
                    }
                }
            }
            let mut out = Triplets::new();
            // a: trace node, b: row node
            for b in 0..2 {
                let Some(r) = layout.mean_index(ix + b) else { continue };
                for a in 0..2 {
                    if let Some(c) = layout.fluct_index(ix + a, split.iota) {
                        out.push((r, c, local[a][b]));
                    }
                }
            }
            out
        });
        SparseMatrix::from_triplets(mesh.nx, layout.n_fluct(), &t)
    }

    /// `mean(f)` at quadrature point `p` of x-cell `ix`, by z-line quadrature.
    fn fbar_at(&self, x: f64) -> f64 {
        let mesh = self.mesh;
        let mut s = 0.0;
        for kz in 0..=mesh.nz {
            for (z, w) in self.rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                s += w * self.problem.f(x, z);
            }
        }
        s / mesh.domain.lz()
    }

    /// `(mean(f), chi_i) + ((g_+ - g_-)/L_z, chi_i)` for interior x-nodes.
    pub fn rhs_mean(&self) -> Vec<f64> {
        let mesh = self.mesh;
        let lz = mesh.domain.lz();
        let shape = &self.shape;
        let parts: Vec<[f64; 2]> = {
            let cell = |ix: usize| {
                let mut loc = [0.0; 2];
                for (p, (x, w)) in self.rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]).enumerate() {
                    let v = self.fbar_at(x) + (self.problem.g_plus(x) - self.problem.g_minus(x)) / lz;
                    loc[0] += w * v * shape[p][0];
                    loc[1] += w * v * shape[p][1];
                }
                loc
            };
            if self.serial { par::map_range_serial(mesh.nx + 1, cell) } else { par::map_range(mesh.nx + 1, cell) }
        };
        let mut out = vec![0.0; mesh.nx];
        for (ix, loc) in parts.iter().enumerate() {
            for a in 0..2 {
                if let Some(r) = mesh_mean(mesh.nx, ix + a) {
                    out[r] += loc[a];
                }
            }
        }
        out
    }

    /// Fluctuation load vector. `P` and `AP` integrate over the whole domain
    /// with both Neumann data; `APL` integrates over the upper subdomain with
    /// `g_+` only.
    pub fn rhs_fluct(&self, variant: RhsVariant) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let sub = if variant == RhsVariant::APL { Sub::One } else { Sub::Full };
        let layout = self.layout(sub)?;
        let cells = self.cell_range(sub)?;
        let shape = &self.shape;
        let problem = self.problem;
        let top = mesh.nz + 1;
        let t = self.collect(|ix| {
            let mut out = Triplets::new();
            for kz in cells.clone() {
                let mut local = [0.0f64; 4];
                for (p, q, x, z, w, _) in self.cell_points(ix, kz) {
                    let c = w * problem.f(x, z);
                    for (l, v) in local.iter_mut().enumerate() {
                        *v += c * shape[p][l & 1] * shape[q][l >> 1];
                    }
                }
                for (l, v) in local.iter().enumerate() {
                    if let Some(r) = layout.fluct_index(ix + (l & 1), kz + (l >> 1)) {
                        out.push((r, 0, *v));
                    }
                }
            }
            // boundary data on the horizontal edges of this column
            let edge = |g: &dyn Fn(f64) -> f64| {
                let mut e = [0.0; 2];
                for (p, (x, w)) in self.rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]).enumerate() {
                    let gv = g(x);
                    e[0] += w * gv * shape[p][0];
                    e[1] += w * gv * shape[p][1];
                }
                e
            };
            let gp = edge(&|x| problem.g_plus(x));
            for a in 0..2 {
                if let Some(r) = layout.fluct_index(ix + a, top) {
                    out.push((r, 0, gp[a]));
                }
            }
            if variant != RhsVariant::APL {
                let gm = edge(&|x| problem.g_minus(x));
                for a in 0..2 {
                    if let Some(r) = layout.fluct_index(ix + a, 0) {
                        out.push((r, 0, -gm[a]));
                    }
                }
            }
            out
        });
        let mut rhs = vec![0.0; layout.n_fluct()];
        for (r, _, v) in t {
            rhs[r] += v;
        }
        Ok(rhs)
    }
}

#[inline]
fn mesh_mean(nx: usize, i: usize) -> Option<usize> {
    (1..=nx).contains(&i).then(|| i - 1)
}

/// Assembles `form` with the default quadrature.
pub fn assemble_form(
    form: FormId,
    mesh: &TensorMesh,
    split: Option<&SubdomainSplit>,
    problem: &ManufacturedProblem,
) -> Result<SparseMatrix> {
    Assembler::new(mesh, problem, split.copied())?.form(form)
}

/// Expanded trace form (`Ca(Two)` or `Bc(Two)`) with the default quadrature.
pub fn assemble_expanded_trace(
    form: FormId,
    mesh: &TensorMesh,
    split: &SubdomainSplit,
    problem: &ManufacturedProblem,
) -> Result<SparseMatrix> {
    Assembler::new(mesh, problem, Some(*split))?.expanded_trace(form)
}

pub fn assemble_rhs_mean(mesh: &TensorMesh, problem: &ManufacturedProblem) -> Result<Vec<f64>> {
    Ok(Assembler::new(mesh, problem, None)?.rhs_mean())
}

pub fn assemble_rhs_fluct(
    mesh: &TensorMesh,
    split: Option<&SubdomainSplit>,
    problem: &ManufacturedProblem,
    variant: RhsVariant,
) -> Result<Vec<f64>> {
    Assembler::new(mesh, problem, split.copied())?.rhs_fluct(variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, split_at_interface, Domain};
    use crate::problem::{setup_a, setup_b, EpsProfile, Setup};
    use std::sync::Arc;

    /// Coefficients chosen per test; exact data is irrelevant for assembly.
    #[derive(Debug)]
    struct Coefs {
        ax: fn(f64, f64) -> f64,
        az: fn(f64, f64) -> f64,
        f: fn(f64, f64) -> f64,
        gp: f64,
        gm: f64,
    }

    impl Setup for Coefs {
        fn name(&self) -> &str {
            "test"
        }
        fn a_x(&self, x: f64, z: f64) -> f64 {
            (self.ax)(x, z)
        }
        fn a_z(&self, x: f64, z: f64) -> f64 {
            (self.az)(x, z)
        }
        fn grad_a_x(&self, _: f64, _: f64) -> [f64; 2] {
            [0.0; 2]
        }
        fn grad_a_z(&self, _: f64, _: f64) -> [f64; 2] {
            [0.0; 2]
        }
        fn u_exact(&self, _: f64, _: f64, _: &EpsProfile) -> f64 {
            0.0
        }
        fn grad_u_exact(&self, _: f64, _: f64, _: &EpsProfile) -> [f64; 2] {
            [0.0; 2]
        }
        fn source(&self, x: f64, z: f64, _: &EpsProfile) -> f64 {
            (self.f)(x, z)
        }
        fn flux_z(&self, _: f64, z: f64, _: &EpsProfile) -> f64 {
            if z > 0.0 { self.gp } else { self.gm }
        }
    }

    fn problem(domain: Domain, eps: EpsProfile, c: Coefs) -> ManufacturedProblem {
        ManufacturedProblem::new(domain, eps, Arc::new(c)).unwrap()
    }

    fn unit(ax: fn(f64, f64) -> f64) -> ManufacturedProblem {
        problem(
            Domain::preset_a(),
            EpsProfile::constant(1.0).unwrap(),
            Coefs { ax, az: |_, _| 1.0, f: |_, _| 0.0, gp: 0.0, gm: 0.0 },
        )
    }

    // ---- dense oracle: global hats, brute-force quadrature over every cell ----

    fn hat(nodes: &[f64], i: usize, x: f64) -> (f64, f64) {
        let h = nodes[1] - nodes[0];
        let d = (x - nodes[i]) / h;
        if d.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        // derivative from the side the point lies on
        (1.0 - d.abs(), if d > 0.0 { -1.0 / h } else { 1.0 / h })
    }

    /// Integrates `g` over all cells whose z-range is inside `[z_lo, z_hi]`,
    /// with a 5-point rule per direction: exact for the polynomial tests below.
    fn integrate(mesh: &TensorMesh, z_lo: f64, z_hi: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
        let r = gauss_rule(5).unwrap();
        let mut s = 0.0;
        for ix in 0..=mesh.nx {
            for kz in 0..=mesh.nz {
                let (za, zb) = (mesh.z_nodes[kz], mesh.z_nodes[kz + 1]);
                if za < z_lo - 1e-12 || zb > z_hi + 1e-12 {
                    continue;
                }
                for (x, wx) in r.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]) {
                    for (z, wz) in r.mapped(za, zb) {
                        s += wx * wz * g(x, z);
                    }
                }
            }
        }
        s
    }

    #[test]
    fn axa_is_classical_stiffness() {
        let mesh = build_mesh(Domain::preset_a(), 7, 3).unwrap();
        let p = unit(|_, _| 1.0);
        let a = assemble_form(FormId::AxA, &mesh, None, &p).unwrap();
        let dx = mesh.dx;
        for i in 0..7 {
            assert!((a.get(i, i).unwrap() - 2.0 / dx).abs() < 1e-12);
            if i + 1 < 7 {
                assert!((a.get(i, i + 1).unwrap() + 1.0 / dx).abs() < 1e-12);
            }
        }
        assert_eq!(a.nnz(), 3 * 7 - 2);
    }

    #[test]
    fn az_matches_dense_oracle() {
        // polynomial coefficients so the 3-point and 5-point rules agree
        let p = problem(
            Domain::preset_a(),
            EpsProfile::constant(0.25).unwrap(),
            Coefs { ax: |x, z| 1.0 + x * z * z, az: |x, z| 2.0 + x * z, f: |_, _| 0.0, gp: 0.0, gm: 0.0 },
        );
        let mesh = build_mesh(Domain::preset_a(), 3, 3).unwrap();
        let az = assemble_form(FormId::Az(Sub::Full), &mesh, None, &p).unwrap();
        let axf = assemble_form(FormId::AxF(Sub::Full), &mesh, None, &p).unwrap();
        let lay = DofLayout::for_sub(&mesh, Sub::Full, None).unwrap();
        for r in 0..lay.n_fluct() {
            let (i, k) = lay.fluct_node(r);
            for c in 0..lay.n_fluct() {
                let (j, l) = lay.fluct_node(c);
                let oz = integrate(&mesh, -1.0, 1.0, |x, z| {
                    let (a, b) = (hat(&mesh.x_nodes, i, x).0, hat(&mesh.z_nodes, k, z).1);
                    let (cc, d) = (hat(&mesh.x_nodes, j, x).0, hat(&mesh.z_nodes, l, z).1);
                    (2.0 + x * z) / 0.25 * a * b * cc * d
                });
                let ox = integrate(&mesh, -1.0, 1.0, |x, z| {
                    let (a, b) = (hat(&mesh.x_nodes, i, x).1, hat(&mesh.z_nodes, k, z).0);
                    let (cc, d) = (hat(&mesh.x_nodes, j, x).1, hat(&mesh.z_nodes, l, z).0);
                    (1.0 + x * z * z) * a * b * cc * d
                });
                let vz = az.get(r, c).unwrap_or(0.0);
                let vx = axf.get(r, c).unwrap_or(0.0);
                assert!((vz - oz).abs() < 1e-12, "a_z ({i},{k})x({j},{l}): {vz} {oz}");
                assert!((vx - ox).abs() < 1e-12, "a_xf ({i},{k})x({j},{l}): {vx} {ox}");
            }
        }
    }

    #[test]
    fn single_column_az_is_scaled_1d_stiffness() {
        let p = unit(|_, _| 1.0);
        let mesh = build_mesh(Domain::preset_a(), 1, 3).unwrap();
        let az = assemble_form(FormId::Az(Sub::Full), &mesh, None, &p).unwrap();
        // x-mass of the single interior hat is 2 dx / 3
        let mass = 2.0 * mesh.dx / 3.0;
        let dz = mesh.dz;
        for k in 1..=3 {
            assert!((az.get(k, k).unwrap() - mass * 2.0 / dz).abs() < 1e-13);
            assert!((az.get(k, k - 1).unwrap() + mass / dz).abs() < 1e-13);
        }
        assert!((az.get(0, 0).unwrap() - mass / dz).abs() < 1e-13);
    }

    #[test]
    fn coupling_forms_match_dense_oracle() {
        let eps = EpsProfile::tanh(0.1, 1.0, 1.0).unwrap();
        let p = problem(
            Domain::preset_b(),
            eps,
            Coefs { ax: |x, z| 1.0 + x * z * z, az: |_, _| 1.0, f: |_, _| 0.0, gp: 0.0, gm: 0.0 },
        );
        let mesh = build_mesh(Domain::preset_b(), 3, 4).unwrap();
        let split = split_at_interface(&mesh, 2).unwrap();
        let asm = Assembler::new(&mesh, &p, Some(split)).unwrap();
        let lz = 2.0;
        let z_i = split.z_iota;
        // z-average of A_x is 1 + x * mean(z^2)
        let mean_z2 = ((0.5f64).powi(3) - (-1.5f64).powi(3)) / 3.0 / lz;
        for sub in [Sub::Full, Sub::One] {
            let lay = asm.layout(sub).unwrap();
            let (zl, zh) = if sub == Sub::One { (z_i, 0.5) } else { (-1.5, 0.5) };
            let cf = asm.form(FormId::Cf(sub)).unwrap();
            let ca = asm.form(FormId::Ca(sub)).unwrap();
            let bc = asm.form(FormId::Bc(sub)).unwrap();
            let bl = asm.form(FormId::Bl(sub)).unwrap();
            for f in 0..lay.n_fluct() {
                let (i, k) = lay.fluct_node(f);
                for j in 1..=mesh.nx {
                    let m = j - 1;
                    let ocf = integrate(&mesh, zl, zh, |x, z| {
                        (1.0 + x * z * z)
                            * hat(&mesh.x_nodes, j, x).1
                            * hat(&mesh.x_nodes, i, x).1
                            * hat(&mesh.z_nodes, k, z).0
                    });
                    let oca = integrate(&mesh, zl, zh, |x, z| {
                        (x * z * z - x * mean_z2)
                            * hat(&mesh.x_nodes, j, x).1
                            * hat(&mesh.x_nodes, i, x).1
                            * hat(&mesh.z_nodes, k, z).0
                    });
                    let obc = integrate(&mesh, zl, zh, |x, z| {
                        hat(&mesh.x_nodes, j, x).0 * hat(&mesh.x_nodes, i, x).0 * hat(&mesh.z_nodes, k, z).0 / lz
                    });
                    assert!((cf.get(f, m).unwrap_or(0.0) - ocf).abs() < 1e-12);
                    assert!((ca.get(m, f).unwrap_or(0.0) - oca).abs() < 1e-12, "{sub:?} {f} {m}");
                    assert!((bc.get(m, f).unwrap_or(0.0) - obc).abs() < 1e-12);
                    // 1/eps is not polynomial: compare against a fine rule
                    let v = bl.get(f, m).unwrap_or(0.0);
                    let obl = integrate(&mesh, zl, zh, |x, z| {
                        hat(&mesh.x_nodes, j, x).0 * hat(&mesh.x_nodes, i, x).0 * hat(&mesh.z_nodes, k, z).0
                            / eps.eval(z)
                    });
                    assert!((v - obl).abs() < 1e-3 * obl.abs().max(1e-3), "b_l {v} {obl}");
                }
            }
        }
    }

    #[test]
    fn ca_is_transpose_of_cf_with_fluctuating_coefficient() {
        let eps = EpsProfile::tanh(0.01, 1.0, 3.0).unwrap();
        let p = setup_b(Domain::preset_b(), eps).unwrap();
        let mesh = build_mesh(Domain::preset_b(), 4, 4).unwrap();
        let asm = Assembler::new(&mesh, &p, None).unwrap();
        let ca = asm.form(FormId::Ca(Sub::Full)).unwrap();
        // c_f with A_x replaced by A_x - mean(A_x), through a brute-force loop
        let lay = asm.layout(Sub::Full).unwrap();
        let rule = gauss_rule(3).unwrap();
        let mut cf_prime = vec![vec![0.0; mesh.nx]; lay.n_fluct()];
        for ix in 0..=mesh.nx {
            for kz in 0..=mesh.nz {
                for (p_i, (x, wx)) in rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]).enumerate() {
                    for (z, wz) in rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                        let coef = p.a_x(x, z) - asm.abar_at(ix, p_i);
                        for f in 0..lay.n_fluct() {
                            let (i, k) = lay.fluct_node(f);
                            for j in 1..=mesh.nx {
                                cf_prime[f][j - 1] += wx
                                    * wz
                                    * coef
                                    * hat(&mesh.x_nodes, j, x).1
                                    * hat(&mesh.x_nodes, i, x).1
                                    * hat(&mesh.z_nodes, k, z).0;
                            }
                        }
                    }
                }
            }
        }
        for f in 0..lay.n_fluct() {
            for j in 0..mesh.nx {
                let v = ca.get(j, f).unwrap_or(0.0);
                assert!((v - cf_prime[f][j]).abs() < 1e-12, "{v} {}", cf_prime[f][j]);
            }
        }
    }

    #[test]
    fn ca_vanishes_for_z_independent_coefficient() {
        let p = unit(|x, _| 1.0 + x);
        let mesh = build_mesh(Domain::preset_a(), 6, 5).unwrap();
        let split = split_at_interface(&mesh, 3).unwrap();
        let ca = assemble_form(FormId::Ca(Sub::Full), &mesh, None, &p).unwrap();
        assert!(ca.max_abs() < 1e-13);
        assert_eq!(ca.nnz(), (3 * 6 - 2) * 7);
        let ca2 = assemble_expanded_trace(FormId::Ca(Sub::Two), &mesh, &split, &p).unwrap();
        assert!(ca2.max_abs() < 1e-13);
    }

    #[test]
    fn symmetry_of_stiffness_forms() {
        let eps = EpsProfile::tanh(1e-8, 1.0, 30.0).unwrap();
        let p = setup_a(Domain::preset_b(), eps).unwrap();
        let mesh = build_mesh(Domain::preset_b(), 9, 11).unwrap();
        let split = split_at_interface(&mesh, 5).unwrap();
        let asm = Assembler::new(&mesh, &p, Some(split)).unwrap();
        for f in [
            FormId::Az(Sub::Full),
            FormId::AxF(Sub::Full),
            FormId::AxA,
            FormId::Az(Sub::One),
            FormId::AxF(Sub::One),
            FormId::Az(Sub::Two),
        ] {
            let m = asm.form(f).unwrap();
            assert!(m.symmetry_defect() <= 1e-13, "{f:?}");
        }
    }

    #[test]
    fn structural_counts() {
        let p = unit(|_, _| 1.0);
        for (nx, nz) in [(2, 2), (3, 5), (7, 4)] {
            let mesh = build_mesh(Domain::preset_a(), nx, nz).unwrap();
            let asm = Assembler::new(&mesh, &p, None).unwrap();
            let a = asm.form(FormId::AxF(Sub::Full)).unwrap();
            let sum = a.add_scaled(&asm.form(FormId::Az(Sub::Full)).unwrap(), 1.0).unwrap();
            assert_eq!(sum.nnz(), (3 * nz + 4) * (3 * nx - 2));
            for f in [FormId::Bl(Sub::Full), FormId::Bc(Sub::Full), FormId::Ca(Sub::Full), FormId::Cf(Sub::Full)] {
                assert_eq!(asm.form(f).unwrap().nnz(), (3 * nx - 2) * (nz + 2), "{f:?}");
            }
        }
    }

    #[test]
    fn expanded_bc_trace_row_sums() {
        let p = unit(|_, _| 1.0);
        let mesh = build_mesh(Domain::preset_a(), 2, 2).unwrap();
        let split = split_at_interface(&mesh, 1).unwrap();
        let bc2 = assemble_expanded_trace(FormId::Bc(Sub::Two), &mesh, &split, &p).unwrap();
        let lay = DofLayout::for_sub(&mesh, Sub::One, Some(&split)).unwrap();
        let mut v = vec![0.0; lay.n_fluct()];
        for d in lay.trace_dofs() {
            v[d] = 1.0;
        }
        let r = bc2.matvec(&v);
        // interior hats: sum_i int chi_i chi_j = int chi_j restricted to the interior span
        let lz = 2.0;
        let h = mesh.dx;
        let expected = [h * (2.0 / 3.0 + 1.0 / 6.0), h * (2.0 / 3.0 + 1.0 / 6.0)];
        for j in 0..2 {
            assert!((r[j] - split.len_omega2 / lz * expected[j]).abs() < 1e-14, "{} {}", r[j], expected[j]);
        }
        for row in 0..bc2.n_rows() {
            assert!(bc2.row(row).0.len() <= 3);
            assert!(bc2.row(row).0.iter().all(|c| lay.trace_dofs().contains(c)));
        }
    }

    #[test]
    fn missing_split_and_diota() {
        let p = unit(|_, _| 1.0);
        let mesh = build_mesh(Domain::preset_a(), 3, 3).unwrap();
        assert_eq!(assemble_form(FormId::Az(Sub::One), &mesh, None, &p).unwrap_err(), Error::MissingSplit("upper subdomain layout"));
        assert_eq!(assemble_form(FormId::DIota, &mesh, None, &p).unwrap_err(), Error::NotAssembled("d_iota"));
        let split = split_at_interface(&mesh, 2).unwrap();
        assert!(assemble_expanded_trace(FormId::Az(Sub::Two), &mesh, &split, &p).is_err());
        assert!(assemble_rhs_fluct(&mesh, None, &p, RhsVariant::APL).is_err());
    }

    #[test]
    fn rhs_trivial_cases() {
        let zero = unit(|_, _| 1.0);
        let mesh = build_mesh(Domain::preset_a(), 4, 4).unwrap();
        assert!(assemble_rhs_mean(&mesh, &zero).unwrap().iter().all(|v| *v == 0.0));
        assert!(assemble_rhs_fluct(&mesh, None, &zero, RhsVariant::P).unwrap().iter().all(|v| *v == 0.0));

        let one = problem(
            Domain::preset_a(),
            EpsProfile::constant(1.0).unwrap(),
            Coefs { ax: |_, _| 1.0, az: |_, _| 1.0, f: |_, _| 1.0, gp: 0.0, gm: 0.0 },
        );
        let m1 = build_mesh(Domain::preset_a(), 1, 1).unwrap();
        let r = assemble_rhs_mean(&m1, &one).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15);

        let gp = problem(
            Domain::preset_a(),
            EpsProfile::constant(1.0).unwrap(),
            Coefs { ax: |_, _| 1.0, az: |_, _| 1.0, f: |_, _| 0.0, gp: 1.0, gm: 0.0 },
        );
        let r = assemble_rhs_fluct(&mesh, None, &gp, RhsVariant::AP).unwrap();
        let lay = DofLayout::for_sub(&mesh, Sub::Full, None).unwrap();
        for (idx, v) in r.iter().enumerate() {
            let (_, k) = lay.fluct_node(idx);
            if k == mesh.nz + 1 {
                assert!((v - mesh.dx).abs() < 1e-15);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn rhs_matches_dense_oracle() {
        let eps = EpsProfile::tanh(1e-8, 1.0, 30.0).unwrap();
        let p = setup_a(Domain::preset_b(), eps).unwrap();
        let mesh = build_mesh(Domain::preset_b(), 7, 7).unwrap();
        let split = split_at_interface(&mesh, 3).unwrap();
        let asm = Assembler::new(&mesh, &p, Some(split)).unwrap();
        let rule = gauss_rule(3).unwrap();
        let lz = mesh.domain.lz();
        // mean load through a direct double loop over all points of each x-cell
        let fm = asm.rhs_mean();
        for i in 1..=mesh.nx {
            let mut s = 0.0;
            for ix in [i - 1, i] {
                for (x, wx) in rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]) {
                    let mut fbar = 0.0;
                    for kz in 0..=mesh.nz {
                        for (z, wz) in rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                            fbar += wz * p.f(x, z);
                        }
                    }
                    let v = fbar / lz + (p.g_plus(x) - p.g_minus(x)) / lz;
                    s += wx * v * hat(&mesh.x_nodes, i, x).0;
                }
            }
            assert!((fm[i - 1] - s).abs() <= 1e-13 * s.abs().max(1.0), "{} {s}", fm[i - 1]);
        }
        for (variant, sub, z_lo) in [(RhsVariant::AP, Sub::Full, 0), (RhsVariant::APL, Sub::One, split.iota)] {
            let ff = asm.rhs_fluct(variant).unwrap();
            let lay = asm.layout(sub).unwrap();
            for idx in 0..lay.n_fluct() {
                let (i, k) = lay.fluct_node(idx);
                let mut s = 0.0;
                for ix in [i - 1, i] {
                    for kz in k.saturating_sub(1)..=k.min(mesh.nz) {
                        if kz < z_lo {
                            continue;
                        }
                        for (x, wx) in rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]) {
                            for (z, wz) in rule.mapped(mesh.z_nodes[kz], mesh.z_nodes[kz + 1]) {
                                s += wx * wz * p.f(x, z) * hat(&mesh.x_nodes, i, x).0 * hat(&mesh.z_nodes, k, z).0;
                            }
                        }
                    }
                    for (x, wx) in rule.mapped(mesh.x_nodes[ix], mesh.x_nodes[ix + 1]) {
                        if k == mesh.nz + 1 {
                            s += wx * p.g_plus(x) * hat(&mesh.x_nodes, i, x).0;
                        }
                        if k == 0 && variant != RhsVariant::APL {
                            s -= wx * p.g_minus(x) * hat(&mesh.x_nodes, i, x).0;
                        }
                    }
                }
                assert!((ff[idx] - s).abs() <= 1e-13 * s.abs().max(1.0), "{variant:?} ({i},{k}) {} {s}", ff[idx]);
            }
        }
        assert_eq!(asm.rhs_fluct(RhsVariant::P).unwrap(), asm.rhs_fluct(RhsVariant::AP).unwrap());
    }

    #[test]
    fn serial_and_parallel_are_identical() {
        let eps = EpsProfile::tanh(1e-8, 1.0, 30.0).unwrap();
        let p = setup_a(Domain::preset_b(), eps).unwrap();
        let mesh = build_mesh(Domain::preset_b(), 20, 17).unwrap();
        let split = split_at_interface(&mesh, 8).unwrap();
        let par = Assembler::new(&mesh, &p, Some(split)).unwrap();
        let ser = par.clone().serial(true);
        for f in [FormId::Az(Sub::Full), FormId::Ca(Sub::One), FormId::Bl(Sub::One), FormId::AxF(Sub::Two)] {
            assert_eq!(par.form(f).unwrap(), ser.form(f).unwrap());
        }
        assert_eq!(par.expanded_trace(FormId::Ca(Sub::Two)).unwrap(), ser.expanded_trace(FormId::Ca(Sub::Two)).unwrap());
        assert_eq!(par.rhs_fluct(RhsVariant::APL).unwrap(), ser.rhs_fluct(RhsVariant::APL).unwrap());
        assert_eq!(par.rhs_mean(), ser.rhs_mean());
    }

    #[test]
    fn layout_indexing_is_a_bijection() {
        let mesh = build_mesh(Domain::preset_a(), 5, 9).unwrap();
        let split = split_at_interface(&mesh, 4).unwrap();
        for sub in [Sub::Full, Sub::One, Sub::Two] {
            let lay = DofLayout::for_sub(&mesh, sub, Some(&split)).unwrap();
            let mut seen = vec![false; lay.n_fluct()];
            for i in 0..=mesh.nx + 1 {
                for k in 0..=mesh.nz + 1 {
                    if let Some(idx) = lay.fluct_index(i, k) {
                        assert!(!seen[idx]);
                        seen[idx] = true;
                        assert_eq!(lay.fluct_node(idx), (i, k));
                    }
                }
            }
            assert!(seen.iter().all(|s| *s));
        }
        let one = DofLayout::for_sub(&mesh, Sub::One, Some(&split)).unwrap();
        assert_eq!(one.z_count(), split.mz);
        assert_eq!(one.trace_dofs(), (0..5).map(|i| i * split.mz).collect::<Vec<_>>());
    }
}
