//! Analytic oracle for the tensor-product model problem.
//!
//! Independent of the library's assembly and eigensolver paths: eigenpairs
//! come from the closed-form spectrum of constant-coefficient tridiagonal
//! matrices and their diagonal similarity transform, combined by tensor
//! products for the 2D operator.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Analytic eigenpairs of the discretized operator and the damped Jacobi
/// iteration matrix, unsorted (indexed by the mode pair `(kx, ky)`).
pub struct AnalyticEigensystem {
    pub values_a: Vec<f64>,
    pub values_g: Vec<f64>,
    /// Unit-norm eigenvector columns, same index order as the values.
    pub vectors: DMatrix<f64>,
}

/// Closed-form eigensystem for mesh width `h = 1/(q+1)` and advection `c`
/// (requires `c <= 2/h`), with damping `omega`.
///
/// 1D: `tridiag(-1/h² - c/2h, 2/h², -1/h² + c/2h)` has eigenvalues
/// `β_k = 2/h² - (√(4 - c²h²)/h²)·cos(kπh)` and eigenvectors
/// `w_k(i) = δ^i sin(ikπh)` with `δ = √((2+ch)/(2-ch))`. 2D eigenvalues add;
/// eigenvectors are tensor products.
pub fn analytic_eigensystem(h: f64, c: f64, omega: f64) -> AnalyticEigensystem {
    let q = (1.0 / h).round() as usize - 1;
    let n = q * q;
    let pi = std::f64::consts::PI;
    let ch = c * h;
    assert!(ch <= 2.0, "real-spectrum regime required");
    let root = (4.0 - ch * ch).sqrt() / (h * h);
    let delta = ((2.0 + ch) / (2.0 - ch)).sqrt();

    let beta: Vec<f64> = (1..=q)
        .map(|k| 2.0 / (h * h) - root * (k as f64 * pi * h).cos())
        .collect();
    let modes: Vec<DVector<f64>> = (1..=q)
        .map(|k| {
            let mut w = DVector::from_fn(q, |i, _| {
                delta.powi(i as i32 + 1) * ((i + 1) as f64 * k as f64 * pi * h).sin()
            });
            let norm = w.norm();
            w /= norm;
            w
        })
        .collect();

    let mut values_a = Vec::with_capacity(n);
    let mut values_g = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut col = 0;
    for ky in 0..q {
        for kx in 0..q {
            let lt = beta[kx] + beta[ky];
            values_a.push(lt);
            values_g.push(1.0 - omega * h * h / 4.0 * lt);
            for j in 0..q {
                for i in 0..q {
                    vectors[(j * q + i, col)] = modes[ky][j] * modes[kx][i];
                }
            }
            let norm = vectors.column(col).norm();
            for r in 0..n {
                vectors[(r, col)] /= norm;
            }
            col += 1;
        }
    }

    AnalyticEigensystem { values_a, values_g, vectors }
}

/// Sorted copies of a value list, descending by magnitude.
pub fn sorted_magnitudes(values: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    mags
}
