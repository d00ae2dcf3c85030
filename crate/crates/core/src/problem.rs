//! Anisotropy profiles, diffusion coefficients and manufactured solutions.
//!
//! The model problem is
//!
//! ```text
//! -d/dx(A_x du/dx) - d/dz(A_z/eps(z) du/dz) = f      in the rectangle
//! (A_z/eps) du/dz = g_plus / g_minus                  on z = z_plus / z_minus
//! u = 0                                               on x = x_minus, x_plus
//! ```
//!
//! Sources are coded from hand-differentiated closed forms. They contain
//! `1/eps` factors, so numerical differentiation of `u_e` would be useless at
//! the anisotropies of interest.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Domain;

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Anisotropy ratio `eps(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsProfile {
    Constant { value: f64 },
    /// `eps(z) = (eps_max (1 + tanh(r z)) + eps_min (1 - tanh(r z))) / 2`.
    Tanh { eps_min: f64, eps_max: f64, r: f64 },
}

impl EpsProfile {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InvalidProfile(format!("constant eps must lie in (0, 1], got {value}")));
        }
        Ok(Self::Constant { value })
    }

    pub fn tanh(eps_min: f64, eps_max: f64, r: f64) -> Result<Self> {
        if !(eps_min > 0.0 && eps_min <= eps_max && eps_max <= 1.0) || !r.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "need 0 < eps_min <= eps_max <= 1 and finite r, got ({eps_min}, {eps_max}, {r})"
            )));
        }
        Ok(Self::Tanh { eps_min, eps_max, r })
    }

    pub fn eps_min(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Tanh { eps_min, .. } => eps_min,
        }
    }

    pub fn eps_max(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Tanh { eps_max, .. } => eps_max,
        }
    }

    /// `eps(z)`. The tanh form is evaluated through logistic functions,
    /// `1 +- tanh(y) = 2 sigmoid(+-2y)`, which keeps full relative accuracy
    /// where `eps` sits at `eps_min`.
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Tanh { eps_min, eps_max, r } => {
                eps_max * sigmoid(2.0 * r * z) + eps_min * sigmoid(-2.0 * r * z)
            }
        }
    }

    /// `eps'(z)`.
    pub fn eval_dz(&self, z: f64) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Tanh { eps_min, eps_max, r } => {
                // sech^2(y) = 4 sigmoid(2y) sigmoid(-2y)
                let sech2 = 4.0 * sigmoid(2.0 * r * z) * sigmoid(-2.0 * r * z);
                0.5 * (eps_max - eps_min) * r * sech2
            }
        }
    }

    /// `eps''(z)`.
    pub fn eval_dzz(&self, z: f64) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Tanh { r, .. } => {
                let t = sigmoid(2.0 * r * z) - sigmoid(-2.0 * r * z);
                -2.0 * r * t * self.eval_dz(z)
            }
        }
    }
}

/// Convenience wrapper with the validation of [`EpsProfile::tanh`].
pub fn eps_tanh(z: f64, eps_min: f64, eps_max: f64, r: f64) -> Result<f64> {
    Ok(EpsProfile::tanh(eps_min, eps_max, r)?.eval(z))
}

/// Coefficients, exact solution and data of one manufactured problem.
///
/// Implement this to plug a custom problem into the solvers. `eps` is passed
/// in so one setup can be combined with any anisotropy profile.
pub trait Setup: Send + Sync {
    fn name(&self) -> &str;

    fn a_x(&self, x: f64, z: f64) -> f64;
    fn a_z(&self, x: f64, z: f64) -> f64;
    /// `[dA_x/dx, dA_x/dz]`
    fn grad_a_x(&self, x: f64, z: f64) -> [f64; 2];
    /// `[dA_z/dx, dA_z/dz]`
    fn grad_a_z(&self, x: f64, z: f64) -> [f64; 2];

    fn u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> f64;
    fn grad_u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> [f64; 2];
    fn source(&self, x: f64, z: f64, eps: &EpsProfile) -> f64;
    /// Normal flux `(A_z / eps) du/dz` of the exact solution.
    fn flux_z(&self, x: f64, z: f64, eps: &EpsProfile) -> f64;
}

/// A [`Setup`] bound to a domain and an anisotropy profile.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub domain: Domain,
    pub eps: EpsProfile,
    setup: Arc<dyn Setup>,
}

impl fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("setup", &self.setup.name())
            .field("domain", &self.domain)
            .field("eps", &self.eps)
            .finish()
    }
}

impl ManufacturedProblem {
    /// Binds `setup` to a domain and profile. Fails if either diffusion
    /// coefficient is not positive on a 101 x 101 sample lattice.
    pub fn new(domain: Domain, eps: EpsProfile, setup: Arc<dyn Setup>) -> Result<Self> {
        let problem = Self { domain, eps, setup };
        problem.positivity_bounds(101)?;
        Ok(problem)
    }

    pub fn setup(&self) -> &dyn Setup {
        &*self.setup
    }

    pub fn name(&self) -> &str {
        self.setup.name()
    }

    pub fn lz(&self) -> f64 {
        self.domain.lz()
    }

    #[inline]
    pub fn a_x(&self, x: f64, z: f64) -> f64 {
        self.setup.a_x(x, z)
    }

    #[inline]
    pub fn a_z(&self, x: f64, z: f64) -> f64 {
        self.setup.a_z(x, z)
    }

    #[inline]
    pub fn f(&self, x: f64, z: f64) -> f64 {
        self.setup.source(x, z, &self.eps)
    }

    pub fn g_plus(&self, x: f64) -> f64 {
        self.setup.flux_z(x, self.domain.z_plus, &self.eps)
    }

    pub fn g_minus(&self, x: f64) -> f64 {
        self.setup.flux_z(x, self.domain.z_minus, &self.eps)
    }

    pub fn u_exact(&self, x: f64, z: f64) -> f64 {
        self.setup.u_exact(x, z, &self.eps)
    }

    pub fn grad_u_exact(&self, x: f64, z: f64) -> [f64; 2] {
        self.setup.grad_u_exact(x, z, &self.eps)
    }

    /// Minimum of `A_x` and `A_z` over an `n x n` lattice covering the domain.
    pub fn positivity_bounds(&self, n: usize) -> Result<(f64, f64)> {
        let d = self.domain;
        let mut min_ax = (f64::INFINITY, 0.0, 0.0);
        let mut min_az = (f64::INFINITY, 0.0, 0.0);
        let step = |lo: f64, len: f64, i: usize| lo + len * i as f64 / (n.max(2) - 1) as f64;
        for i in 0..n.max(2) {
            let x = step(d.x_minus, d.lx(), i);
            for k in 0..n.max(2) {
                let z = step(d.z_minus, d.lz(), k);
                let (ax, az) = (self.a_x(x, z), self.a_z(x, z));
                if !(ax >= min_ax.0) {
                    min_ax = (ax, x, z);
                }
                if !(az >= min_az.0) {
                    min_az = (az, x, z);
                }
            }
        }
        for (name, (m, x, z)) in [("A_x", min_ax), ("A_z", min_az)] {
            if !(m > 0.0) {
                return Err(Error::NonPositiveCoefficient { name, min: m, x, z });
            }
        }
        Ok((min_ax.0, min_az.0))
    }
}

#[derive(Debug, Clone, Copy)]
struct Waves {
    kx: f64,
    kz: f64,
    x0: f64,
}

impl Waves {
    fn new(domain: &Domain) -> Self {
        Self { kx: 2.0 * PI / domain.lx(), kz: 2.0 * PI / domain.lz(), x0: domain.x_minus }
    }

    /// `(S, S')` with `S(x) = sin(kx (x - x_minus))`.
    fn sx(&self, x: f64) -> (f64, f64) {
        let (s, c) = (self.kx * (x - self.x0)).sin_cos();
        (s, self.kx * c)
    }
}

/// Polynomial coefficients `A_x = c1 + x z^2`, `A_z = c2 + x z` with exact
/// solution `u_e = sin(2 pi x / L_x) (1 + eps(z) sin(2 pi z / L_z))`.
#[derive(Debug, Clone)]
pub struct SetupA {
    pub c1: f64,
    pub c2: f64,
    waves: Waves,
}

impl SetupA {
    pub fn new(domain: &Domain, c1: f64, c2: f64) -> Self {
        Self { c1, c2, waves: Waves::new(domain) }
    }

    /// `G(x,z) = (A_z/eps) d/dz[1 + eps sin(kz z)]`, so the flux is `S(x) G`.
    fn g(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let kz = self.waves.kz;
        let (s, c) = (kz * z).sin_cos();
        let q = eps.eval_dz(z) / eps.eval(z);
        self.a_z(x, z) * (q * s + kz * c)
    }
}

impl Setup for SetupA {
    fn name(&self) -> &str {
        "a"
    }

    fn a_x(&self, x: f64, z: f64) -> f64 {
        self.c1 + x * z * z
    }

    fn a_z(&self, x: f64, z: f64) -> f64 {
        self.c2 + x * z
    }

    fn grad_a_x(&self, x: f64, z: f64) -> [f64; 2] {
        [z * z, 2.0 * x * z]
    }

    fn grad_a_z(&self, x: f64, z: f64) -> [f64; 2] {
        [z, x]
    }

    fn u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let (s, _) = self.waves.sx(x);
        s * (1.0 + eps.eval(z) * (self.waves.kz * z).sin())
    }

    fn grad_u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> [f64; 2] {
        let kz = self.waves.kz;
        let (s, ds) = self.waves.sx(x);
        let (sz, cz) = (kz * z).sin_cos();
        let e = eps.eval(z);
        [ds * (1.0 + e * sz), s * (eps.eval_dz(z) * sz + e * kz * cz)]
    }

    fn source(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let Waves { kx, kz, .. } = self.waves;
        let (s, ds) = self.waves.sx(x);
        let d2s = -kx * kx * s;
        let (sz, cz) = (kz * z).sin_cos();
        let e = eps.eval(z);
        let q = eps.eval_dz(z) / e;
        let dq = eps.eval_dzz(z) / e - q * q;
        let w = 1.0 + e * sz;
        let ax = self.a_x(x, z);
        let az = self.a_z(x, z);
        let dxax = self.grad_a_x(x, z)[0];
        let dzaz = self.grad_a_z(x, z)[1];
        // d/dz G where G = A_z (q sin + kz cos)
        let dg = dzaz * (q * sz + kz * cz) + az * (dq * sz + q * kz * cz - kz * kz * sz);
        -(dxax * ds + ax * d2s) * w - s * dg
    }

    fn flux_z(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        self.waves.sx(x).0 * self.g(x, z, eps)
    }
}

/// Trigonometric coefficients `A_x = 1 + cos(c1 + x z)`,
/// `A_z = 1 + sin^2(c2 + x z)` with exact solution
/// `u_e = sin(2 pi x / L_x) (1 + sin(2 pi eps(z) z / L_z))`.
#[derive(Debug, Clone)]
pub struct SetupB {
    pub c1: f64,
    pub c2: f64,
    waves: Waves,
}

impl SetupB {
    pub fn new(domain: &Domain, c1: f64, c2: f64) -> Self {
        Self { c1, c2, waves: Waves::new(domain) }
    }
}

impl Setup for SetupB {
    fn name(&self) -> &str {
        "b"
    }

    fn a_x(&self, x: f64, z: f64) -> f64 {
        1.0 + (self.c1 + x * z).cos()
    }

    fn a_z(&self, x: f64, z: f64) -> f64 {
        let s = (self.c2 + x * z).sin();
        1.0 + s * s
    }

    fn grad_a_x(&self, x: f64, z: f64) -> [f64; 2] {
        let s = (self.c1 + x * z).sin();
        [-s * z, -s * x]
    }

    fn grad_a_z(&self, x: f64, z: f64) -> [f64; 2] {
        // d/dt sin^2(t) = sin(2t)
        let s2 = (2.0 * (self.c2 + x * z)).sin();
        [s2 * z, s2 * x]
    }

    fn u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let (s, _) = self.waves.sx(x);
        s * (1.0 + (self.waves.kz * eps.eval(z) * z).sin())
    }

    fn grad_u_exact(&self, x: f64, z: f64, eps: &EpsProfile) -> [f64; 2] {
        let kz = self.waves.kz;
        let (s, ds) = self.waves.sx(x);
        let e = eps.eval(z);
        let phi = kz * e * z;
        let dphi = kz * (eps.eval_dz(z) * z + e);
        [ds * (1.0 + phi.sin()), s * phi.cos() * dphi]
    }

    fn source(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let Waves { kx, kz, .. } = self.waves;
        let (s, ds) = self.waves.sx(x);
        let d2s = -kx * kx * s;
        let e = eps.eval(z);
        let q = eps.eval_dz(z) / e;
        let dq = eps.eval_dzz(z) / e - q * q;
        let (sp, cp) = (kz * e * z).sin_cos();
        let w = 1.0 + sp;
        let ax = self.a_x(x, z);
        let az = self.a_z(x, z);
        let dxax = self.grad_a_x(x, z)[0];
        let dzaz = self.grad_a_z(x, z)[1];
        // flux = S G with G = kz A_z cos(phi) (q z + 1), phi' = kz eps (q z + 1)
        let m = q * z + 1.0;
        let dg = kz * (dzaz * cp * m - az * sp * kz * e * m * m + az * cp * (dq * z + q));
        -(dxax * ds + ax * d2s) * w - s * dg
    }

    fn flux_z(&self, x: f64, z: f64, eps: &EpsProfile) -> f64 {
        let kz = self.waves.kz;
        let e = eps.eval(z);
        let q = eps.eval_dz(z) / e;
        let phi = kz * e * z;
        self.waves.sx(x).0 * self.a_z(x, z) * kz * phi.cos() * (q * z + 1.0)
    }
}

/// `A_x = A_z = 1`, `u_e = sin(2 pi x / L_x)`: a z-independent solution with
/// zero Neumann data, so the exact fluctuation vanishes for every profile.
#[derive(Debug, Clone)]
pub struct ZeroFluctuation {
    waves: Waves,
}

impl ZeroFluctuation {
    pub fn new(domain: &Domain) -> Self {
        Self { waves: Waves::new(domain) }
    }
}

impl Setup for ZeroFluctuation {
    fn name(&self) -> &str {
        "zero-fluct"
    }

    fn a_x(&self, _x: f64, _z: f64) -> f64 {
        1.0
    }

    fn a_z(&self, _x: f64, _z: f64) -> f64 {
        1.0
    }

    fn grad_a_x(&self, _x: f64, _z: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn grad_a_z(&self, _x: f64, _z: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn u_exact(&self, x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        self.waves.sx(x).0
    }

    fn grad_u_exact(&self, x: f64, _z: f64, _eps: &EpsProfile) -> [f64; 2] {
        [self.waves.sx(x).1, 0.0]
    }

    fn source(&self, x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        self.waves.kx * self.waves.kx * self.waves.sx(x).0
    }

    fn flux_z(&self, _x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        0.0
    }
}

/// Variable coefficients with `f = 0`, `g = 0`: the exact solution is zero.
#[derive(Debug, Clone, Copy)]
pub struct ZeroData;

impl Setup for ZeroData {
    fn name(&self) -> &str {
        "zero"
    }

    fn a_x(&self, x: f64, z: f64) -> f64 {
        2.0 + x * z.cos()
    }

    fn a_z(&self, x: f64, z: f64) -> f64 {
        1.0 + x * x + z * z
    }

    fn grad_a_x(&self, x: f64, z: f64) -> [f64; 2] {
        [z.cos(), -x * z.sin()]
    }

    fn grad_a_z(&self, x: f64, z: f64) -> [f64; 2] {
        [2.0 * x, 2.0 * z]
    }

    fn u_exact(&self, _x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        0.0
    }

    fn grad_u_exact(&self, _x: f64, _z: f64, _eps: &EpsProfile) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn source(&self, _x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        0.0
    }

    fn flux_z(&self, _x: f64, _z: f64, _eps: &EpsProfile) -> f64 {
        0.0
    }
}

/// Setup A with `c1 = c2 = L_z`.
pub fn setup_a(domain: Domain, eps: EpsProfile) -> Result<ManufacturedProblem> {
    let lz = domain.lz();
    ManufacturedProblem::new(domain, eps, Arc::new(SetupA::new(&domain, lz, lz)))
}

/// Setup B with `c1 = c2 = L_z`.
pub fn setup_b(domain: Domain, eps: EpsProfile) -> Result<ManufacturedProblem> {
    let lz = domain.lz();
    ManufacturedProblem::new(domain, eps, Arc::new(SetupB::new(&domain, lz, lz)))
}

pub fn setup_zero_fluctuation(domain: Domain, eps: EpsProfile) -> Result<ManufacturedProblem> {
    ManufacturedProblem::new(domain, eps, Arc::new(ZeroFluctuation::new(&domain)))
}

pub fn setup_zero_data(domain: Domain, eps: EpsProfile) -> Result<ManufacturedProblem> {
    ManufacturedProblem::new(domain, eps, Arc::new(ZeroData))
}

/// Looks a setup up by its configuration name (`a`, `b`, `zero-fluct`,
/// `zero`).
pub fn setup_by_name(name: &str, domain: Domain, eps: EpsProfile) -> Result<ManufacturedProblem> {
    match name {
        "a" => setup_a(domain, eps),
        "b" => setup_b(domain, eps),
        "zero-fluct" => setup_zero_fluctuation(domain, eps),
        "zero" => setup_zero_data(domain, eps),
        other => Err(Error::InvalidProfile(format!("unknown setup {other:?}"))),
    }
}
