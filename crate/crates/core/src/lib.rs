//! Finite element solvers for strongly anisotropic elliptic problems
//!
//! ```text
//! -dx(A_x dx u) - dz(A_z / eps(z) dz u) = f
//! ```
//!
//! on a rectangle, with homogeneous Dirichlet data at the vertical sides and
//! Neumann data at the horizontal ones. Three discretizations are provided:
//!
//! * the direct formulation ([`ModelKind::P`]), which degenerates as `eps -> 0`;
//! * the asymptotic-preserving formulation ([`ModelKind::AP`]), which splits
//!   `u` into its z-mean and a zero-mean fluctuation enforced by a Lagrange
//!   multiplier and stays well posed for any `eps`;
//! * a hybrid ([`ModelKind::APL`]) that keeps the asymptotic-preserving
//!   model above an interface `z_iota` and replaces it below by the 1D limit
//!   model.
//!
//! ```no_run
//! use aniso_hybrid::{build_mesh, setup_a, solve_model, Domain, EpsProfile, ModelKind, SolveOptions};
//!
//! let eps = EpsProfile::tanh(1e-8, 1.0, 30.0)?;
//! let problem = setup_a(Domain::preset_b(), eps)?;
//! let mesh = build_mesh(problem.domain, 63, 63)?;
//! let out = solve_model(ModelKind::AP, &mesh, None, &problem, &SolveOptions::default())?;
//! println!("{:e}", aniso_hybrid::error_norms(&out.field, &problem).rel_h1);
//! # Ok::<(), aniso_hybrid::Error>(())
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod mesh;
pub mod models;
pub mod par;
pub mod problem;
pub mod quadrature;
pub mod sparse;

pub use analysis::{
    eoc, error_norms, ess_distance, interface_scan, theorem1_fit, theorem2_fit, ErrorReport, ScanPoint, ScanResult,
    Theorem1Fit, Theorem2Fit,
};
pub use assembly::{
    assemble_expanded_trace, assemble_form, assemble_rhs_fluct, assemble_rhs_mean, Assembler, DofLayout, FormId,
    RhsVariant, Sub,
};
pub use error::{Error, Result};
pub use mesh::{build_mesh, find_interface_for_eps, interface_at_fraction, split_at_interface, Domain, SubdomainSplit, TensorMesh};
pub use models::{
    build_ap_system, build_apl_system, build_p_system, build_system, derive_xi2, field_from_solution, h1_distance, solve_limit_1d, solve_model, solve_system,
    ModelKind, ModelSystem, Region, SolutionField, SolveOptions, SolveOutput, SolveReport, Xi2Field,
};
pub use problem::{
    eps_tanh, setup_a, setup_b, setup_by_name, setup_zero_data, setup_zero_fluctuation, EpsProfile, ManufacturedProblem, Setup,
};
pub use quadrature::{gauss_rule, p1_eval, q1_eval, QuadratureRule1D};
pub use sparse::{
    componentwise_cond_estimate, compose_blocks, cond1_estimate, equilibrate, lu_solve, matrix_stats, skeel_cond_estimate, write_matrix_market,
    BlockPlacement, BlockSystem, LuFactorization, MatrixStats, SparseMatrix,
};
