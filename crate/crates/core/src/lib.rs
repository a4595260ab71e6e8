//! Numerical laboratory for coarse spaces of two-level iterative methods.
//!
//! The crate builds the advection–diffusion model problem on the unit square
//! with a damped Jacobi smoother, assembles the two-level iteration operator
//! `T = (I - P(PᵀAP)⁻¹PᵀA)G` for arbitrary coarse spaces, and evaluates its
//! convergence metrics (spectral radius, energy norm, preconditioned
//! condition number). On top of that sit two analysis layers:
//!
//! * [`perturbation`] — the closed-form eigenvalue `λ(ε,γ)` of one-dimensional
//!   coarse-space perturbations `span{v₁ + εv₂}`, its sign/orthogonality case
//!   analysis, and solvers for the perturbation sizes where the two-level
//!   radius drops.
//! * [`optimizer`] — stochastic minimization of `‖T(P)^k‖_F²` over the
//!   prolongation `P` via Rademacher trace probes and exact reverse-mode
//!   gradients through the two-level sweep (restriction tied to `Pᵀ`).
//!
//! Everything is a pure function of its inputs; results are immutable after
//! construction and safe to share across threads.

pub mod coord;
pub mod error;
pub mod linalg;
pub mod model_problem;
pub mod optimizer;
pub mod perturbation;
pub mod two_level;

pub use error::{Error, Result};
pub use model_problem::{build_problem, build_smoother, eigensystem};
pub use model_problem::{Eigensystem, GridProblem, JacobiSmoother};
pub use optimizer::{optimize, rademacher_probes, OptimizationTrace, OptimizerConfig};
pub use perturbation::{
    select_pair, similarity_form, sweep_epsilon, CaseLabel, PairPolicy, PerturbationCase,
};
pub use two_level::{
    assemble_t, energy_norm, mbar_check, metric_report, preconditioned_condition,
    spectral_coarse_space, spectral_radius, CoarseKind, CoarseSpace, KappaVariant, MetricReport,
    TiePolicy, TwoLevelOperator,
};
