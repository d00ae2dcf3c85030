use thiserror::Error;

/// Errors raised by mesh construction, assembly, factorization and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("mesh resolution must be at least 1 in each direction (got nx={nx}, nz={nz})")]
    EmptyMesh { nx: usize, nz: usize },

    #[error("interface index {iota} out of range 1..={nz}")]
    InterfaceOutOfRange { iota: usize, nz: usize },

    #[error("degenerate subdomain split: {0}")]
    DegenerateSplit(String),

    #[error("unsupported Gauss rule with {0} points (1..=5 available)")]
    UnsupportedQuadrature(usize),

    #[error("invalid anisotropy profile: {0}")]
    InvalidProfile(String),

    #[error("coefficient {name} not positive: minimum {min:e} at ({x}, {z})")]
    NonPositiveCoefficient { name: &'static str, min: f64, x: f64, z: f64 },

    #[error("form {0} needs a subdomain split")]
    MissingSplit(&'static str),

    #[error("anisotropy ratio evaluated to non-positive value {value:e} at z={z}")]
    NonPositiveEps { value: f64, z: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("form {0} is catalogued but never assembled")]
    NotAssembled(&'static str),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
