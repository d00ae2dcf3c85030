//! Uniform tensor-product grids on a rectangle and their split into an upper
//! subdomain (solved with the asymptotic-preserving model) and a lower one
//! (replaced by the limit model).
//!
//! Node indices run `i = 0..=nx+1` in x and `k = 0..=nz+1` in z, so `nx` and
//! `nz` count *interior* nodes and a mesh with `nx + 1` cells per direction.

use crate::error::{Error, Result};
use crate::problem::EpsProfile;

/// Rectangle `[x_minus, x_plus] x [z_minus, z_plus]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_minus: f64,
    pub x_plus: f64,
    pub z_minus: f64,
    pub z_plus: f64,
}

impl Domain {
    pub fn new(x_minus: f64, x_plus: f64, z_minus: f64, z_plus: f64) -> Result<Self> {
        let finite = [x_minus, x_plus, z_minus, z_plus].iter().all(|v| v.is_finite());
        if !finite || x_minus >= x_plus || z_minus >= z_plus {
            return Err(Error::InvalidDomain(format!(
                "[{x_minus}, {x_plus}] x [{z_minus}, {z_plus}]"
            )));
        }
        Ok(Self { x_minus, x_plus, z_minus, z_plus })
    }

    /// `[0,1] x [-1,1]`, used with a constant anisotropy ratio.
    pub fn preset_a() -> Self {
        Self { x_minus: 0.0, x_plus: 1.0, z_minus: -1.0, z_plus: 1.0 }
    }

    /// `[0,1] x [-1.5,0.5]`, used with the tanh anisotropy profile.
    pub fn preset_b() -> Self {
        Self { x_minus: 0.0, x_plus: 1.0, z_minus: -1.5, z_plus: 0.5 }
    }

    pub fn lx(&self) -> f64 {
        self.x_plus - self.x_minus
    }

    pub fn lz(&self) -> f64 {
        self.z_plus - self.z_minus
    }
}

/// Uniform grid with `nx + 2` nodes in x and `nz + 2` nodes in z.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh {
    pub domain: Domain,
    pub nx: usize,
    pub nz: usize,
    pub x_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    pub dx: f64,
    pub dz: f64,
}

fn uniform_nodes(lo: f64, hi: f64, interior: usize) -> (Vec<f64>, f64) {
    let cells = interior + 1;
    let h = (hi - lo) / cells as f64;
    let mut nodes: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
    nodes[0] = lo;
    nodes[cells] = hi;
    (nodes, h)
}

/// Builds the grid with `nx` x `nz` interior nodes.
pub fn build_mesh(domain: Domain, nx: usize, nz: usize) -> Result<TensorMesh> {
    if nx == 0 || nz == 0 {
        return Err(Error::EmptyMesh { nx, nz });
    }
    let domain = Domain::new(domain.x_minus, domain.x_plus, domain.z_minus, domain.z_plus)?;
    let (x_nodes, dx) = uniform_nodes(domain.x_minus, domain.x_plus, nx);
    let (z_nodes, dz) = uniform_nodes(domain.z_minus, domain.z_plus, nz);
    Ok(TensorMesh { domain, nx, nz, x_nodes, z_nodes, dx, dz })
}

impl TensorMesh {
    /// Grid with `cells` cells per direction, i.e. `cells - 1` interior nodes.
    pub fn with_cells(domain: Domain, cells: usize) -> Result<Self> {
        build_mesh(domain, cells.saturating_sub(1), cells.saturating_sub(1))
    }

    pub fn x_cells(&self) -> usize {
        self.nx + 1
    }

    pub fn z_cells(&self) -> usize {
        self.nz + 1
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 2) * (self.nz + 2)
    }

    /// Flat index of node `(i, k)` in an x-major nodal array.
    #[inline]
    pub fn node(&self, i: usize, k: usize) -> usize {
        i * (self.nz + 2) + k
    }

    /// Characteristic mesh size `sqrt(dx dz)`.
    pub fn h(&self) -> f64 {
        (self.dx * self.dz).sqrt()
    }
}

/// Interface at node row `iota`. Cells `iota..=nz` form the upper subdomain
/// and cells `0..iota` the lower one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdomainSplit {
    pub iota: usize,
    pub z_iota: f64,
    /// Number of z-node rows carrying fluctuation unknowns, `nz + 2 - iota`.
    pub mz: usize,
    /// Length of the lower z-interval, `z_iota - z_minus`.
    pub len_omega2: f64,
}

pub fn split_at_interface(mesh: &TensorMesh, iota: usize) -> Result<SubdomainSplit> {
    if iota == 0 || iota > mesh.nz {
        return Err(Error::InterfaceOutOfRange { iota, nz: mesh.nz });
    }
    let z_iota = mesh.z_nodes[iota];
    Ok(SubdomainSplit {
        iota,
        z_iota,
        mz: mesh.nz + 2 - iota,
        len_omega2: z_iota - mesh.domain.z_minus,
    })
}

impl SubdomainSplit {
    /// z-cells of the upper subdomain.
    pub fn upper_cells(&self, mesh: &TensorMesh) -> std::ops::Range<usize> {
        self.iota..mesh.nz + 1
    }

    /// z-cells of the lower subdomain.
    pub fn lower_cells(&self) -> std::ops::Range<usize> {
        0..self.iota
    }
}

/// Largest `iota` with `eps(z_iota) <= eps_target`, clamped to `1..=nz`.
pub fn find_interface_for_eps(mesh: &TensorMesh, eps: &EpsProfile, eps_target: f64) -> usize {
    (1..=mesh.nz)
        .rev()
        .find(|&k| eps.eval(mesh.z_nodes[k]) <= eps_target)
        .unwrap_or(1)
}

/// Interface row whose lower subdomain covers `fraction` of the z-extent,
/// clamped to `1..=nz`.
pub fn interface_at_fraction(mesh: &TensorMesh, fraction: f64) -> usize {
    let k = (fraction * mesh.z_cells() as f64).round() as usize;
    k.clamp(1, mesh.nz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interior_node() {
        let m = build_mesh(Domain::new(0.0, 1.0, -1.0, 1.0).unwrap(), 1, 1).unwrap();
        assert_eq!(m.x_nodes, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.z_nodes, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn reference_grid_spacing() {
        let m = build_mesh(Domain::preset_b(), 63, 63).unwrap();
        assert_eq!(m.dx, 1.0 / 64.0);
        assert_eq!(m.dz, 2.0 / 64.0);
        // dyadic spacing: differences are exact
        for w in m.x_nodes.windows(2) {
            assert_eq!(w[1] - w[0], m.dx);
        }
        for w in m.z_nodes.windows(2) {
            assert_eq!(w[1] - w[0], m.dz);
        }
    }

    #[test]
    fn node_counts() {
        let m = build_mesh(Domain::preset_b(), 250, 250).unwrap();
        assert_eq!(m.z_nodes.len(), 252);
        assert_eq!(m.x_nodes.len(), 252);
        assert_eq!(*m.x_nodes.last().unwrap(), 1.0);
        assert_eq!(*m.z_nodes.last().unwrap(), 0.5);
        assert_eq!(m.z_nodes[0], -1.5);
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(
            build_mesh(Domain::preset_a(), 0, 3),
            Err(Error::EmptyMesh { .. })
        ));
        assert!(build_mesh(Domain::preset_a(), 3, 0).is_err());
        assert!(Domain::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn split_sizes() {
        let m = build_mesh(Domain::preset_b(), 250, 250).unwrap();
        assert_eq!(split_at_interface(&m, 150).unwrap().mz, 102);
        assert_eq!(split_at_interface(&m, 1).unwrap().mz, 251);
        assert_eq!(split_at_interface(&m, 250).unwrap().mz, 2);
        assert!(split_at_interface(&m, 0).is_err());
        assert!(split_at_interface(&m, 251).is_err());
        let s = split_at_interface(&m, 150).unwrap();
        assert_eq!(s.z_iota, m.z_nodes[150]);
        assert!(s.len_omega2 > 0.0);
    }

    #[test]
    fn split_partitions_cells() {
        let m = build_mesh(Domain::preset_b(), 9, 12).unwrap();
        for iota in 1..=m.nz {
            let s = split_at_interface(&m, iota).unwrap();
            let mut seen = vec![0u8; m.z_cells()];
            for c in s.upper_cells(&m).chain(s.lower_cells()) {
                seen[c] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn interface_clamping() {
        let m = build_mesh(Domain::preset_b(), 15, 15).unwrap();
        let flat = EpsProfile::constant(1e-3).unwrap();
        assert_eq!(find_interface_for_eps(&m, &flat, 1e-4), 1);
        assert_eq!(find_interface_for_eps(&m, &flat, 1e-3), m.nz);
        let tanh = EpsProfile::tanh(1e-8, 1.0, 30.0).unwrap();
        assert_eq!(find_interface_for_eps(&m, &tanh, 2.0), m.nz);
    }

    #[test]
    fn interface_brackets_target() {
        let m = build_mesh(Domain::preset_b(), 127, 127).unwrap();
        let eps = EpsProfile::tanh(1e-8, 1.0, 30.0).unwrap();
        let target = 1e-4;
        let iota = find_interface_for_eps(&m, &eps, target);
        // brute-force scan of every node row
        let expected = (1..=m.nz).filter(|&k| eps.eval(m.z_nodes[k]) <= target).max().unwrap();
        assert_eq!(iota, expected);
        assert!(eps.eval(m.z_nodes[iota]) <= target);
        assert!(eps.eval(m.z_nodes[iota + 1]) > target);
    }

    proptest::proptest! {
        #[test]
        fn spacing_is_uniform(nx in 1usize..300, nz in 1usize..300, a in -3.0f64..3.0, l in 0.1f64..5.0) {
            let m = build_mesh(Domain::new(a, a + l, -l, a).unwrap_or(Domain::preset_a()), nx, nz).unwrap();
            let tol = 8.0 * f64::EPSILON * (a.abs() + 2.0 * l);
            for w in m.x_nodes.windows(2) {
                proptest::prop_assert!((w[1] - w[0] - m.dx).abs() <= tol);
            }
            for w in m.z_nodes.windows(2) {
                proptest::prop_assert!(w[1] > w[0]);
            }
            proptest::prop_assert_eq!(m.x_nodes[0], m.domain.x_minus);
            proptest::prop_assert_eq!(*m.x_nodes.last().unwrap(), m.domain.x_plus);
        }
    }
}
