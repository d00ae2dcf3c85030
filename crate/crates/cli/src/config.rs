//! Experiment configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use aniso_hybrid::{build_mesh, setup_by_name, Domain, EpsProfile, ManufacturedProblem, ModelKind, TensorMesh};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Solve,
    Convergence,
    InterfaceScan,
    Conditioning,
    Efficiency,
    TheoremFits,
}

impl Study {
    pub fn as_str(&self) -> &'static str {
        match self {
            Study::Solve => "solve",
            Study::Convergence => "convergence",
            Study::InterfaceScan => "interface-scan",
            Study::Conditioning => "conditioning",
            Study::Efficiency => "efficiency",
            Study::TheoremFits => "theorem-fits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainPreset {
    /// `[0,1] x [-1,1]`
    A,
    /// `[0,1] x [-1.5,0.5]`
    B,
}

impl DomainPreset {
    pub fn domain(&self) -> Domain {
        match self {
            DomainPreset::A => Domain::preset_a(),
            DomainPreset::B => Domain::preset_b(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Tanh,
    /// `eps` equal to `eps_min` everywhere.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    /// `"a"`, `"b"`, `"zero-fluct"` or `"zero"`.
    #[serde(default = "default_setup")]
    pub name: String,
    #[serde(default = "default_domain")]
    pub domain: DomainPreset,
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    #[serde(default = "default_eps_max")]
    pub eps_max: f64,
    #[serde(default = "default_r")]
    pub r: f64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            name: default_setup(),
            domain: default_domain(),
            profile: default_profile(),
            eps_min: default_eps_min(),
            eps_max: default_eps_max(),
            r: default_r(),
        }
    }
}

fn default_setup() -> String {
    "a".into()
}
fn default_domain() -> DomainPreset {
    DomainPreset::B
}
fn default_profile() -> ProfileKind {
    ProfileKind::Tanh
}
fn default_eps_min() -> f64 {
    1e-8
}
fn default_eps_max() -> f64 {
    1.0
}
fn default_r() -> f64 {
    30.0
}

impl SetupConfig {
    pub fn profile_with_floor(&self, eps_min: f64) -> aniso_hybrid::Result<EpsProfile> {
        match self.profile {
            ProfileKind::Tanh => EpsProfile::tanh(eps_min, self.eps_max, self.r),
            ProfileKind::Constant => EpsProfile::constant(eps_min),
        }
    }

    pub fn problem(&self, eps_min: f64) -> aniso_hybrid::Result<ManufacturedProblem> {
        setup_by_name(&self.name, self.domain.domain(), self.profile_with_floor(eps_min)?)
    }
}

/// A mesh given either as a cell count per direction or as interior node
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSpec {
    Cells(usize),
    Nodes(NodeCounts),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCounts {
    pub nx: usize,
    pub nz: usize,
}

impl MeshSpec {
    /// Interior node counts `(nx, nz)`.
    pub fn nodes(&self) -> (usize, usize) {
        match *self {
            MeshSpec::Cells(n) => (n.saturating_sub(1), n.saturating_sub(1)),
            MeshSpec::Nodes(NodeCounts { nx, nz }) => (nx, nz),
        }
    }

    pub fn build(&self, domain: Domain) -> aniso_hybrid::Result<TensorMesh> {
        let (nx, nz) = self.nodes();
        build_mesh(domain, nx, nz)
    }
}

/// How the hybrid interface is placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InterfaceSpec {
    Iota(usize),
    /// Number of fluctuation rows kept in the upper subdomain.
    Mz(usize),
    /// Largest row whose anisotropy ratio stays at or below the target.
    EpsTarget(f64),
    /// Fraction of the z-extent covered by the lower subdomain.
    Fraction(f64),
}

impl InterfaceSpec {
    pub fn resolve(&self, mesh: &TensorMesh, eps: &EpsProfile) -> Result<usize, CliError> {
        let iota = match *self {
            InterfaceSpec::Iota(i) => i,
            InterfaceSpec::Mz(mz) => (mesh.nz + 2).checked_sub(mz).ok_or_else(|| {
                CliError::Invalid(format!("interface.mz = {mz} exceeds nz + 2 = {}", mesh.nz + 2))
            })?,
            InterfaceSpec::EpsTarget(t) => aniso_hybrid::find_interface_for_eps(mesh, eps, t),
            InterfaceSpec::Fraction(f) => aniso_hybrid::interface_at_fraction(mesh, f),
        };
        if iota == 0 || iota > mesh.nz {
            return Err(CliError::Invalid(format!("interface row {iota} outside 1..={}", mesh.nz)));
        }
        Ok(iota)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    #[serde(default)]
    pub setup: SetupConfig,
    pub meshes: Vec<MeshSpec>,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default)]
    pub interface: Option<InterfaceSpec>,
    /// Gauss points per direction.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    #[serde(default = "default_plateau")]
    pub plateau_tol: f64,
    /// Floors of the anisotropy profile swept by the conditioning study.
    #[serde(default)]
    pub eps_min_sweep: Vec<f64>,
    /// `[lo, hi]` range of `eps(z_iota)` scanned by interface studies.
    #[serde(default)]
    pub eps_window: Option<[f64; 2]>,
    /// Explicit interface rows, overriding `eps_window`.
    #[serde(default)]
    pub iotas: Option<Vec<usize>>,
    #[serde(default)]
    pub estimate_condition: bool,
    /// Skip factorization; efficiency study only.
    #[serde(default)]
    pub assemble_only: bool,
    /// Write wall-clock columns. Off gives byte-identical reruns.
    #[serde(default = "default_true")]
    pub timings: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_models() -> Vec<String> {
    vec!["p".into(), "ap".into(), "apl".into()]
}
fn default_quadrature() -> usize {
    3
}
fn default_plateau() -> f64 {
    0.10
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Parse { line, column, message, .. } => {
                CliError::Parse { source_name: path.display().to_string(), line, column, message }
            }
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Parse {
            source_name: "<config>".into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, CliError> {
        self.models
            .iter()
            .map(|m| match ModelKind::parse(m) {
                Some(ModelKind::L1D) | None => Err(CliError::Invalid(format!("models: unknown model {m:?}"))),
                Some(k) => Ok(k),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Invalid(msg));
        if self.meshes.is_empty() {
            return bad("meshes: list is empty".into());
        }
        for m in &self.meshes {
            let (nx, nz) = m.nodes();
            if nx == 0 || nz == 0 {
                return bad(format!("meshes: {m:?} has no interior nodes"));
            }
        }
        let models = self.model_kinds()?;
        if models.is_empty() {
            return bad("models: list is empty".into());
        }
        if !matches!(self.setup.name.as_str(), "a" | "b" | "zero-fluct" | "zero") {
            return bad(format!("setup.name: unknown setup {:?}", self.setup.name));
        }
        self.setup.profile_with_floor(self.setup.eps_min).map_err(|e| CliError::Invalid(format!("setup: {e}")))?;
        if !(1..=5).contains(&self.quadrature) {
            return bad(format!("quadrature: {} outside 1..=5", self.quadrature));
        }
        if !(self.plateau_tol >= 0.0 && self.plateau_tol.is_finite()) {
            return bad(format!("plateau_tol: {} is not a non-negative number", self.plateau_tol));
        }
        if let Some([lo, hi]) = self.eps_window {
            if !(lo > 0.0 && hi > lo) {
                return bad(format!("eps_window: [{lo:e}, {hi:e}] is not an increasing positive range"));
            }
        }
        let needs_interface = models.contains(&ModelKind::APL)
            && matches!(self.study, Study::Solve | Study::Convergence | Study::Conditioning | Study::Efficiency);
        if needs_interface && self.interface.is_none() {
            return bad(format!("interface: required by study {} with model apl", self.study.as_str()));
        }
        match self.study {
            Study::Conditioning if self.eps_min_sweep.is_empty() => bad("eps_min_sweep: required by conditioning".into()),
            Study::Conditioning if self.eps_min_sweep.iter().any(|e| e.is_nan() || *e <= 0.0) => {
                bad("eps_min_sweep: entries must be positive".into())
            }
            Study::Convergence if self.meshes.len() < 2 => bad("meshes: convergence needs at least two".into()),
            _ => Ok(()),
        }
    }

    /// Interface rows scanned by interface studies on `mesh`, in increasing
    /// order.
    pub fn scan_rows(&self, mesh: &TensorMesh, eps: &EpsProfile) -> Vec<usize> {
        if let Some(rows) = &self.iotas {
            let mut r: Vec<usize> = rows.iter().copied().filter(|&i| i >= 1 && i <= mesh.nz).collect();
            r.sort_unstable();
            r.dedup();
            return r;
        }
        let [lo, hi] = self.eps_window.unwrap_or(match self.study {
            Study::TheoremFits => [1e-6, 1e-1],
            _ => [1.5 * self.setup.eps_min, 0.5],
        });
        (1..=mesh.nz)
            .filter(|&k| {
                let e = eps.eval(mesh.z_nodes[k]);
                e >= lo && e <= hi
            })
            .collect()
    }
}
