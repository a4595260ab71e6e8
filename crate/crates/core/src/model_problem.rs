//! Finite-difference advection–diffusion model problem on the unit square.
//!
//! A uniform grid of mesh width `h = 1/(q+1)` with `q` interior points per
//! direction discretizes `-Δu + c(∂_x u + ∂_y u) = f` with homogeneous
//! Dirichlet boundary conditions, a second-order 5-point stencil for the
//! Laplacian and central differences for the advection terms. The resulting
//! matrix has the constant diagonal `4/h²`, so damped Jacobi splitting and
//! smoothing iteration take a particularly simple form: `G = I - ω(h²/4)A`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance under which two eigenvalue magnitudes count as tied.
const MAGNITUDE_TIE_REL_TOL: f64 = 1e-12;

/// The discretized PDE: mesh width, advection coefficient and system matrix.
#[derive(Debug, Clone)]
pub struct GridProblem {
    /// Mesh width, `1/(q+1)` for `q` interior points per direction.
    pub h: f64,
    /// Advection coefficient, dimensionless, >= 0.
    pub c: f64,
    /// Interior points per direction.
    pub q: usize,
    /// Total unknowns, `q²`.
    pub n: usize,
    /// Dense system matrix in lexicographic interior-node ordering (x fastest).
    pub a: DMatrix<f64>,
    /// Constant diagonal value of `a`, equal to `4/h²`.
    pub d: f64,
}

impl GridProblem {
    /// True when the matrix is symmetric (c = 0).
    pub fn is_symmetric(&self) -> bool {
        self.c == 0.0
    }

    /// Upper limit on `c` for a real spectrum.
    pub fn real_spectrum_limit(&self) -> f64 {
        2.0 / self.h
    }
}

/// Damped Jacobi splitting `A = M - N` with `M = D/ω`.
#[derive(Debug, Clone)]
pub struct JacobiSmoother {
    /// Damping parameter in (0, 1].
    pub omega: f64,
    /// Iteration matrix `G = I - ω(h²/4)A`.
    pub g: DMatrix<f64>,
    /// Scalar action of `ωD⁻¹`, i.e. `ω·h²/4`.
    pub m_inv_scale: f64,
}

/// Paired eigenvalues of `G` and `A` with shared eigenvectors, sorted by
/// descending eigenvalue magnitude of `G`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    /// Eigenvalues of `G`, sorted by the fixed ordering.
    pub values_g: Vec<f64>,
    /// Eigenvalues of `A`, paired with `values_g`.
    pub values_a: Vec<f64>,
    /// Eigenvector columns, unit 2-norm, largest-magnitude entry positive.
    pub vectors: DMatrix<f64>,
    /// Permutation applied to the raw solver output: `ordering[k]` is the raw
    /// index of the k-th sorted eigenpair.
    pub ordering: Vec<usize>,
    /// Magnitude-cluster id per sorted position; equal ids mean `|λ|` ties.
    pub clusters: Vec<usize>,
}

impl Eigensystem {
    pub fn n(&self) -> usize {
        self.values_g.len()
    }

    /// Multiplicity of the magnitude cluster containing sorted position `j`.
    pub fn cluster_multiplicity(&self, j: usize) -> usize {
        let id = self.clusters[j];
        self.clusters.iter().filter(|&&c| c == id).count()
    }

    /// Sorted positions belonging to the same magnitude cluster as `j`.
    pub fn cluster_members(&self, j: usize) -> Vec<usize> {
        let id = self.clusters[j];
        (0..self.n()).filter(|&k| self.clusters[k] == id).collect()
    }
}

/// Assembles the 5-point stencil matrix with Dirichlet rows eliminated.
///
/// Couplings: diagonal `4/h²`, west/east `-1/h² ∓ c/(2h)`, south/north
/// `-1/h² ∓ c/(2h)`, with nodes numbered lexicographically (x fastest).
pub fn build_problem(h: f64, c: f64) -> Result<GridProblem> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidMeshWidth(h));
    }
    let inv_h = 1.0 / h;
    let rounded = inv_h.round();
    if (inv_h - rounded).abs() > 1e-9 * inv_h.max(1.0) || rounded < 2.0 {
        return Err(Error::InvalidMeshWidth(h));
    }
    if c < 0.0 {
        return Err(Error::InvalidAdvection(c));
    }

    let q = rounded as usize - 1;
    let n = q * q;
    // Stencil values from the exact integer 1/h; 4/h² then comes out exact
    // for the usual mesh widths instead of accumulating representation error.
    let inv_h = rounded;
    let diag = 4.0 * inv_h * inv_h;
    let west = -inv_h * inv_h - c * inv_h / 2.0;
    let east = -inv_h * inv_h + c * inv_h / 2.0;
    // The y-direction couplings coincide with the x-direction ones because the
    // advection acts with the same coefficient in both directions.
    let south = west;
    let north = east;

    let mut a = DMatrix::zeros(n, n);
    for j in 0..q {
        for i in 0..q {
            let row = j * q + i;
            a[(row, row)] = diag;
            if i > 0 {
                a[(row, row - 1)] = west;
            }
            if i + 1 < q {
                a[(row, row + 1)] = east;
            }
            if j > 0 {
                a[(row, row - q)] = south;
            }
            if j + 1 < q {
                a[(row, row + q)] = north;
            }
        }
    }

    Ok(GridProblem { h, c, q, n, a, d: diag })
}

/// Builds the damped Jacobi iteration matrix `G = I - ω(h²/4)A`.
pub fn build_smoother(problem: &GridProblem, omega: f64) -> Result<JacobiSmoother> {
    if omega.is_nan() || omega <= 0.0 || omega > 1.0 {
        return Err(Error::InvalidDamping(omega));
    }
    // ω h²/4 = ω/d exactly, since the diagonal is constant at d = 4/h².
    let scale = omega / problem.d;
    let mut g = &problem.a * (-scale);
    for i in 0..problem.n {
        g[(i, i)] += 1.0;
    }
    Ok(JacobiSmoother { omega, g, m_inv_scale: scale })
}

/// Computes the shared eigensystem of `A` and `G`.
///
/// Requires the real-spectrum regime `c <= 2/h`. For `c = 0` the symmetric
/// eigensolver is used; for `c > 0` the general dense nonsymmetric routine.
/// Eigenvalues of `G` follow from the spectral mapping
/// `λ = 1 - ω(h²/4)·λ̃` which is exact because `D = 4/h² I`.
pub fn eigensystem(problem: &GridProblem, smoother: &JacobiSmoother) -> Result<Eigensystem> {
    let limit = problem.real_spectrum_limit();
    if problem.c > limit {
        return Err(Error::ComplexSpectrumRegime { c: problem.c, limit });
    }

    let (values_a_raw, mut vectors) = if problem.is_symmetric() {
        let se = problem.a.clone().symmetric_eigen();
        (se.eigenvalues.iter().copied().collect::<Vec<_>>(), se.eigenvectors)
    } else {
        let ed = linalg::eigen(&problem.a)?;
        let max_mag = ed
            .re
            .iter()
            .zip(&ed.im)
            .map(|(r, i)| r.hypot(*i))
            .fold(0.0f64, f64::max);
        let max_im = ed.max_imag();
        if max_im > 1e-8 * max_mag {
            return Err(Error::UnexpectedComplexSpectrum { max_im });
        }
        (ed.re, ed.vectors.expect("vectors requested"))
    };

    linalg::normalize_columns_signed(&mut vectors);

    let values_g_raw: Vec<f64> = values_a_raw
        .iter()
        .map(|lt| 1.0 - smoother.m_inv_scale * lt)
        .collect();

    // Sort by |λ(G)| descending. Within a magnitude tie: descending signed
    // value, then ascending raw index. Exact float comparison would make the
    // ± pairs at ω = 1 order-unstable, so magnitudes are clustered first.
    let n = values_g_raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values_g_raw[j]
            .abs()
            .partial_cmp(&values_g_raw[i].abs())
            .unwrap()
            .then(std::cmp::Ordering::Equal)
    });

    // Chain-cluster magnitudes on the sorted list.
    let scale = values_g_raw.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = MAGNITUDE_TIE_REL_TOL * scale.max(f64::MIN_POSITIVE);
    let mut clusters = vec![0usize; n];
    let mut cluster_id = 0usize;
    for k in 1..n {
        let prev = values_g_raw[order[k - 1]].abs();
        let cur = values_g_raw[order[k]].abs();
        if (prev - cur).abs() > tol {
            cluster_id += 1;
        }
        clusters[k] = cluster_id;
    }

    // Re-sort within clusters: descending signed value, ascending raw index.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && clusters[end] == clusters[start] {
            end += 1;
        }
        order[start..end].sort_by(|&i, &j| {
            values_g_raw[j]
                .partial_cmp(&values_g_raw[i])
                .unwrap()
                .then(i.cmp(&j))
        });
        start = end;
    }

    let values_g: Vec<f64> = order.iter().map(|&i| values_g_raw[i]).collect();
    let values_a: Vec<f64> = order.iter().map(|&i| values_a_raw[i]).collect();
    let mut sorted_vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        sorted_vectors.set_column(k, &vectors.column(i));
    }

    // Residual validation per column, against ||A||.
    let a_norm = problem.a.norm();
    let res = linalg::max_eigen_residual(&problem.a, &values_a, &sorted_vectors);
    if res > 1e-9 * a_norm {
        return Err(Error::EigensolverFailure(
            "eigenpair residual exceeds 1e-9 * ||A||",
        ));
    }

    Ok(Eigensystem {
        values_g,
        values_a,
        vectors: sorted_vectors,
        ordering: order,
        clusters,
    })
}
