//! Error types shared by all modules.
//!
//! Errors split into two families: precondition violations (bad inputs,
//! unsupported parameter regimes) and numerical failures (solver breakdown,
//! degenerate operators). Callers that map errors to process exit codes can
//! use [`Error::is_precondition`] / [`Error::is_numerical`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// 1/h must be an integer >= 2 so the grid has at least one interior point.
    #[error("invalid mesh width h = {0}: 1/h must be an integer >= 2")]
    InvalidMeshWidth(f64),

    /// Advection coefficients are restricted to c >= 0.
    #[error("invalid advection coefficient c = {0}: must be >= 0")]
    InvalidAdvection(f64),

    /// Damping parameter must lie in (0, 1].
    #[error("invalid damping parameter omega = {0}: must be in (0, 1]")]
    InvalidDamping(f64),

    /// Requested regime c > 2/h where the spectrum of A is no longer real.
    #[error("advection c = {c} exceeds 2/h = {limit}: spectrum of A is complex")]
    ComplexSpectrumRegime { c: f64, limit: f64 },

    /// Coarse dimension outside 1..=n (or otherwise unusable).
    #[error("coarse dimension m = {m} out of range for n = {n}")]
    CoarseDimOutOfRange { m: usize, n: usize },

    /// Prolongation columns are (numerically) linearly dependent.
    #[error("prolongation is rank deficient: sigma_min/sigma_max = {ratio:.3e}")]
    RankDeficientProlongation { ratio: f64 },

    /// Coarse matrix P^T A P is singular or numerically singular.
    #[error("degenerate coarse space: cond(A_c) estimate {cond:.3e} exceeds 1e12")]
    DegenerateCoarseSpace { cond: f64 },

    /// The energy norm is defined only for symmetric positive definite A.
    #[error("metric unsupported: {0}")]
    UnsupportedMetric(&'static str),

    /// I - T is numerically singular, no finite condition number.
    #[error("preconditioned system is numerically singular: sigma_min/sigma_max = {ratio:.3e}")]
    SingularPreconditionedSystem { ratio: f64 },

    /// The QR iteration failed to converge.
    #[error("eigensolver failed to converge ({0})")]
    EigensolverFailure(&'static str),

    /// Eigenvalues came out complex where the real-spectrum condition holds.
    #[error("unexpected complex eigenvalues (max |Im| = {max_im:.3e}), assembly suspect")]
    UnexpectedComplexSpectrum { max_im: f64 },

    /// The denominator of the closed-form perturbed eigenvalue vanished.
    #[error("perturbed coarse vector is A-degenerate at epsilon = {epsilon}: pole")]
    Pole { epsilon: f64 },

    /// Perturbation pair is not two-dimensional (gamma = +-1).
    #[error("degenerate perturbation pair: |gamma| = {gamma} (vectors are parallel)")]
    DegeneratePair { gamma: f64 },

    /// Sign-degenerate eigenvalue pattern, Theorem-style case analysis impossible.
    #[error("unclassifiable perturbation case: {0}")]
    Unclassifiable(&'static str),

    /// The M-bar operator is not positive definite, optimality check aborted.
    #[error("M-bar operator not positive definite: min eigenvalue {min_eig:.3e}")]
    MbarNotPositiveDefinite { min_eig: f64 },

    /// M-bar cross-check requires a symmetric smoother (c = 0).
    #[error("M-bar check requires c = 0 (symmetric M), got c = {0}")]
    MbarRequiresSymmetric(f64),

    /// Invalid optimizer configuration.
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    /// The optimizer aborted after repeated step rejections.
    #[error("optimizer aborted at step {step}: A_c stayed singular after {halvings} halvings")]
    OptimizerAborted { step: usize, halvings: usize },
}

impl Error {
    /// True for errors caused by invalid inputs or unsupported regimes.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::InvalidMeshWidth(_)
                | Error::InvalidAdvection(_)
                | Error::InvalidDamping(_)
                | Error::ComplexSpectrumRegime { .. }
                | Error::CoarseDimOutOfRange { .. }
                | Error::RankDeficientProlongation { .. }
                | Error::UnsupportedMetric(_)
                | Error::DegeneratePair { .. }
                | Error::Unclassifiable(_)
                | Error::MbarRequiresSymmetric(_)
                | Error::InvalidConfig(_)
        )
    }

    /// True for runtime numerical breakdowns.
    pub fn is_numerical(&self) -> bool {
        !self.is_precondition()
    }
}
