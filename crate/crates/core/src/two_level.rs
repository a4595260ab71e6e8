//! Two-level iteration operator and its convergence metrics.
//!
//! Given a smoother `G` and a prolongation `P` (restriction tied to `Pᵀ`),
//! the error propagation of one smoothing sweep followed by a coarse
//! correction is `T = (I - P(PᵀAP)⁻¹PᵀA)G`. This module assembles `T`,
//! evaluates the spectral radius, the energy norm `‖T‖_A` (symmetric case)
//! and the condition number of the preconditioned operator `I - T`, and
//! provides the spectral coarse space plus the `M̄`-based optimality
//! cross-check for the symmetric regime.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model_problem::{Eigensystem, GridProblem, JacobiSmoother};

/// Condition estimate of `A_c` beyond which the coarse space counts as degenerate.
const AC_COND_LIMIT: f64 = 1e12;

/// A full-column-rank prolongation defining the coarse space `V_c = range(P)`.
///
/// The restriction is always `Pᵀ`; it is never stored independently.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    pub p: DMatrix<f64>,
    pub m: usize,
}

impl CoarseSpace {
    /// Validates full column rank (smallest singular value above
    /// `1e-10 ×` the largest).
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let m = p.ncols();
        if m == 0 {
            return Ok(Self { p, m });
        }
        let (smax, smin) = linalg::singular_extrema(&p);
        let ratio = smin / smax;
        if ratio.is_nan() || ratio <= 1e-10 {
            return Err(Error::RankDeficientProlongation { ratio });
        }
        Ok(Self { p, m })
    }

    /// Empty coarse space: the two-level operator degenerates to `G`.
    pub fn empty(n: usize) -> Self {
        Self { p: DMatrix::zeros(n, 0), m: 0 }
    }
}

/// How to order eigenpairs of equal magnitude when cutting a coarse space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Descending signed value, then ascending solver index (module default).
    #[default]
    SignedDescending,
    /// Negative member first, matching the sign convention of the
    /// perturbation analysis at ω = 1.
    NegativeFirst,
    /// Alternate signs starting with a negative member. This reproduces the
    /// eigen-ordering behind the reference condition-number table.
    AlternatingNegativeFirst,
}

/// Kind tag carried into reports for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseKind {
    Spectral,
    Perturbed,
    Optimized,
    Custom,
}

/// Where an operator came from; serialized with every metric report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub h: f64,
    pub c: f64,
    pub omega: f64,
    pub m: usize,
    pub kind: CoarseKind,
}

/// The assembled two-level operator with its coarse matrix.
#[derive(Debug, Clone)]
pub struct TwoLevelOperator {
    /// Dense `T = (I - P A_c⁻¹ PᵀA) G`.
    pub t: DMatrix<f64>,
    /// Galerkin coarse matrix `A_c = PᵀAP`.
    pub a_c: DMatrix<f64>,
    /// System matrix (kept for the energy norm).
    pub a: DMatrix<f64>,
    /// Prolongation the operator was assembled from.
    pub p: DMatrix<f64>,
    pub symmetric: bool,
    pub provenance: Provenance,
}

/// Which definition of the preconditioned condition number to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaVariant {
    /// `σ_max(I-T) / σ_min(I-T)`; valid for nonsymmetric operators.
    #[default]
    SingularValue,
    /// `max|λ(I-T)| / min|λ(I-T)|`.
    EigenvalueRatio,
}

/// Convergence metrics of a two-level operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub rho: f64,
    pub energy_norm: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa2_variant: KappaVariant,
    pub provenance: Provenance,
}

/// Assembles `T` for a coarse space, factorizing `A_c` once.
pub fn assemble_t(
    problem: &GridProblem,
    smoother: &JacobiSmoother,
    coarse: &CoarseSpace,
    kind: CoarseKind,
) -> Result<TwoLevelOperator> {
    let provenance = Provenance {
        h: problem.h,
        c: problem.c,
        omega: smoother.omega,
        m: coarse.m,
        kind,
    };
    if coarse.m == 0 {
        return Ok(TwoLevelOperator {
            t: smoother.g.clone(),
            a_c: DMatrix::zeros(0, 0),
            a: problem.a.clone(),
            p: coarse.p.clone(),
            symmetric: problem.is_symmetric(),
            provenance,
        });
    }

    let a_c = coarse.p.transpose() * &problem.a * &coarse.p;
    let (smax, smin) = linalg::singular_extrema(&a_c);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > AC_COND_LIMIT {
        return Err(Error::DegenerateCoarseSpace { cond });
    }

    // T = G - P A_c^{-1} P^T A G.
    let ag = &problem.a * &smoother.g;
    let rhs = coarse.p.transpose() * ag;
    let lu = a_c.clone().lu();
    let x = lu
        .solve(&rhs)
        .ok_or(Error::DegenerateCoarseSpace { cond })?;
    let t = &smoother.g - &coarse.p * x;

    Ok(TwoLevelOperator {
        t,
        a_c,
        a: problem.a.clone(),
        p: coarse.p.clone(),
        symmetric: problem.is_symmetric(),
        provenance,
    })
}

/// Spectral radius of `T` via the dense nonsymmetric eigensolver.
pub fn spectral_radius(op: &TwoLevelOperator) -> Result<f64> {
    linalg::spectral_radius(&op.t)
}

/// Energy norm `‖T‖_A` for symmetric positive definite `A`.
///
/// Computed as the largest singular value of `A^{1/2} T A^{-1/2}`.
pub fn energy_norm(op: &TwoLevelOperator) -> Result<f64> {
    if !op.symmetric {
        return Err(Error::UnsupportedMetric(
            "energy norm requires symmetric positive definite A (c = 0)",
        ));
    }
    energy_norm_with(&op.a, &op.t)
}

/// Energy norm of `t` in the inner product induced by the SPD matrix `a`.
pub fn energy_norm_with(a: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<f64> {
    let (s, s_inv) = linalg::spd_sqrt(a)?;
    let (smax, _) = linalg::singular_extrema(&(&s * t * &s_inv));
    Ok(smax)
}

/// Condition number `κ₂` of `I - T`, the system matrix preconditioned by the
/// two-level method (`I - BA = T` for the implicit preconditioner `B`).
pub fn preconditioned_condition(op: &TwoLevelOperator, variant: KappaVariant) -> Result<f64> {
    let n = op.t.nrows();
    let i_minus_t = DMatrix::identity(n, n) - &op.t;
    match variant {
        KappaVariant::SingularValue => {
            let (smax, smin) = linalg::singular_extrema(&i_minus_t);
            if smin < 1e-14 * smax {
                return Err(Error::SingularPreconditionedSystem { ratio: smin / smax });
            }
            Ok(smax / smin)
        }
        KappaVariant::EigenvalueRatio => {
            let ed = linalg::eigenvalues(&i_minus_t)?;
            let mags: Vec<f64> = ed.re.iter().zip(&ed.im).map(|(r, i)| r.hypot(*i)).collect();
            let max = mags.iter().fold(0.0f64, |a, x| a.max(*x));
            let min = mags.iter().fold(f64::MAX, |a, x| a.min(*x));
            if min < 1e-14 * max {
                return Err(Error::SingularPreconditionedSystem { ratio: min / max });
            }
            Ok(max / min)
        }
    }
}

/// Full metric suite; energy norm and κ₂ are reported where defined.
pub fn metric_report(op: &TwoLevelOperator, variant: KappaVariant) -> Result<MetricReport> {
    let rho = spectral_radius(op)?;
    let energy = if op.symmetric { Some(energy_norm(op)?) } else { None };
    let kappa2 = Some(preconditioned_condition(op, variant)?);
    Ok(MetricReport {
        rho,
        energy_norm: energy,
        kappa2,
        kappa2_variant: variant,
        provenance: op.provenance.clone(),
    })
}

/// Selection order of sorted eigenpair positions under a tie policy.
///
/// Positions are permuted only inside magnitude clusters, so any prefix cut
/// `0..m` honors the descending-magnitude order.
pub fn selection_order(eigen: &Eigensystem, policy: TiePolicy) -> Vec<usize> {
    let n = eigen.n();
    let mut order: Vec<usize> = (0..n).collect();
    if policy == TiePolicy::SignedDescending {
        return order;
    }
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigen.clusters[end] == eigen.clusters[start] {
            end += 1;
        }
        match policy {
            TiePolicy::SignedDescending => {}
            TiePolicy::NegativeFirst => {
                order[start..end].sort_by(|&i, &j| {
                    eigen.values_g[i]
                        .partial_cmp(&eigen.values_g[j])
                        .unwrap()
                        .then(i.cmp(&j))
                });
            }
            TiePolicy::AlternatingNegativeFirst => {
                let members: Vec<usize> = order[start..end].to_vec();
                let neg: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&k| eigen.values_g[k] < 0.0)
                    .collect();
                let pos: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&k| eigen.values_g[k] >= 0.0)
                    .collect();
                let mut interleaved = Vec::with_capacity(members.len());
                let mut ni = 0;
                let mut pi = 0;
                while ni < neg.len() || pi < pos.len() {
                    if ni < neg.len() {
                        interleaved.push(neg[ni]);
                        ni += 1;
                    }
                    if pi < pos.len() {
                        interleaved.push(pos[pi]);
                        pi += 1;
                    }
                }
                order[start..end].copy_from_slice(&interleaved);
            }
        }
        start = end;
    }
    order
}

/// Spectral coarse space: the `m` eigenvectors of `G` with largest |λ|
/// under the module's default tie-break.
pub fn spectral_coarse_space(eigen: &Eigensystem, m: usize) -> Result<CoarseSpace> {
    spectral_coarse_space_with(eigen, m, TiePolicy::SignedDescending)
}

/// Spectral coarse space under an explicit tie policy.
pub fn spectral_coarse_space_with(
    eigen: &Eigensystem,
    m: usize,
    policy: TiePolicy,
) -> Result<CoarseSpace> {
    let n = eigen.n();
    if m < 1 || m > n {
        return Err(Error::CoarseDimOutOfRange { m, n });
    }
    let order = selection_order(eigen, policy);
    let mut p = DMatrix::zeros(n, m);
    for (col, &k) in order[..m].iter().enumerate() {
        p.set_column(col, &eigen.vectors.column(k));
    }
    CoarseSpace::new(p)
}

/// Outcome of the `M̄`-operator optimality cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct MbarReport {
    /// Subspaces coincide within the principal-angle tolerance.
    pub coincide: bool,
    pub max_principal_angle: f64,
    /// The cut at `m` split a degenerate eigenspace of `M̄A`; the comparison
    /// aligned the free directions inside that eigenspace before measuring
    /// angles (the subspace family is non-unique there).
    pub boundary_degenerate: bool,
    pub mbar_min_eigenvalue: f64,
}

/// Verifies that the span of the `m` lowest eigenmodes of `M̄A` coincides
/// with the span of the `m` slowest modes of `G` (symmetric regime).
///
/// With `M = D/ω` one has `M̄A = 2M⁻¹A - (M⁻¹A)² = I - G²`, so the lowest
/// modes of `M̄A` pair with the largest |λ(G)|. The check assembles `M̄A`
/// independently and compares subspaces through principal angles.
pub fn mbar_check(
    problem: &GridProblem,
    smoother: &JacobiSmoother,
    m: usize,
) -> Result<MbarReport> {
    if !problem.is_symmetric() {
        return Err(Error::MbarRequiresSymmetric(problem.c));
    }
    let n = problem.n;
    if m < 1 || m > n {
        return Err(Error::CoarseDimOutOfRange { m, n });
    }

    let s = smoother.m_inv_scale;
    // M-bar itself: 2sI - s²A; positive definiteness gates the check.
    let a_eigs = problem.a.clone().symmetric_eigen().eigenvalues;
    let mbar_min_eigenvalue = a_eigs
        .iter()
        .map(|lt| 2.0 * s - s * s * lt)
        .fold(f64::MAX, f64::min);
    if mbar_min_eigenvalue <= 0.0 {
        return Err(Error::MbarNotPositiveDefinite { min_eig: mbar_min_eigenvalue });
    }

    // M̄A = 2sA - s²A², assembled directly from A.
    let mbar_a = 2.0 * s * &problem.a - s * s * (&problem.a * &problem.a);
    let se = mbar_a.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());

    // Slowest G modes under the module ordering.
    let eigen = crate::model_problem::eigensystem(problem, smoother)?;
    let mut g_basis = DMatrix::zeros(n, m);
    for col in 0..m {
        g_basis.set_column(col, &eigen.vectors.column(col));
    }

    // Detect whether the cut at m splits a degenerate eigenvalue of M̄A.
    let scale = se.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tie_tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let boundary_degenerate =
        m < n && (se.eigenvalues[idx[m]] - se.eigenvalues[idx[m - 1]]).abs() <= tie_tol;

    let mbar_basis = if !boundary_degenerate {
        let mut b = DMatrix::zeros(n, m);
        for (col, &i) in idx[..m].iter().enumerate() {
            b.set_column(col, &se.eigenvectors.column(i));
        }
        b
    } else {
        // Fixed part: clusters fully below the cut. Boundary cluster: align
        // the free directions with the G-side subspace, because any
        // orthonormal choice inside the eigenspace is an equally valid set
        // of "lowest modes".
        let mut lo = m;
        while lo > 0
            && (se.eigenvalues[idx[lo - 1]] - se.eigenvalues[idx[m - 1]]).abs() <= tie_tol
        {
            lo -= 1;
        }
        let mut hi = m;
        while hi < n && (se.eigenvalues[idx[hi]] - se.eigenvalues[idx[m - 1]]).abs() <= tie_tol {
            hi += 1;
        }
        let need = m - lo;
        let mut cluster = DMatrix::zeros(n, hi - lo);
        for (col, &i) in idx[lo..hi].iter().enumerate() {
            cluster.set_column(col, &se.eigenvectors.column(i));
        }
        // Project the G basis onto the cluster eigenspace and keep the `need`
        // dominant directions of the projection.
        let proj = &cluster * (cluster.transpose() * &g_basis);
        let svd = proj.svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let mut b = DMatrix::zeros(n, m);
        for (col, &i) in idx[..lo].iter().enumerate() {
            b.set_column(col, &se.eigenvectors.column(i));
        }
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| {
            svd.singular_values[j]
                .partial_cmp(&svd.singular_values[i])
                .unwrap()
        });
        for (col, &i) in order[..need].iter().enumerate() {
            b.set_column(lo + col, &u.column(i));
        }
        b
    };

    let angles = linalg::principal_angles(&mbar_basis, &g_basis);
    let max_angle = angles.iter().fold(0.0f64, |a, x| a.max(*x));
    Ok(MbarReport {
        coincide: max_angle <= 1e-8,
        max_principal_angle: max_angle,
        boundary_degenerate,
        mbar_min_eigenvalue,
    })
}
