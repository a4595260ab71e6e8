//! Dense linear-algebra kernels.
//!
//! The centerpiece is a real nonsymmetric eigensolver (Householder reduction
//! to Hessenberg form followed by the implicitly shifted QR iteration with
//! eigenvector back-substitution, in the EISPACK/JAMA lineage). Symmetric
//! eigendecompositions, SVD and LU factorizations are delegated to nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigendecomposition of a real square matrix.
///
/// Eigenvalues are returned as `re[j] + i*im[j]`. When vectors are requested,
/// real eigenvalues carry a real eigenvector in column `j`; a complex
/// conjugate pair `(j, j+1)` stores the real part in column `j` and the
/// imaginary part in column `j+1`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl EigenDecomposition {
    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.hypot(*i))
            .fold(0.0, f64::max)
    }

    /// Largest |Im| over all eigenvalues.
    pub fn max_imag(&self) -> f64 {
        self.im.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }
}

/// Eigenvalues only (no eigenvector accumulation).
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    decompose(a, false)
}

/// Full decomposition with eigenvectors.
pub fn eigen(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    decompose(a, true)
}

/// Spectral radius of a general real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.spectral_radius())
}

fn decompose(a: &DMatrix<f64>, want_vectors: bool) -> Result<EigenDecomposition> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigendecomposition requires a square matrix");
    if n == 0 {
        return Ok(EigenDecomposition {
            re: vec![],
            im: vec![],
            vectors: want_vectors.then(|| DMatrix::zeros(0, 0)),
        });
    }
    let mut h = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    orthes(&mut h, &mut v);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    hqr2(&mut h, &mut v, &mut d, &mut e, want_vectors)?;
    Ok(EigenDecomposition {
        re: d,
        im: e,
        vectors: want_vectors.then_some(v),
    })
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// orthogonal transformation in `v` (Algol orthes/ortran).
fn orthes(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let low = 0usize;
    let high = n - 1;
    let mut ort = vec![0.0f64; n];

    for m in (low + 1)..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // H = (I - u u^T / h) H (I - u u^T / h)
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    // Accumulate transformations.
    for m in ((low + 1)..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[(i, j)];
            }
            // Double division avoids possible underflow.
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                v[(i, j)] += g * ort[i];
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Shifted QR iteration on a Hessenberg matrix with optional eigenvector
/// back-substitution (Algol hqr2). `d`/`e` receive real/imaginary parts.
#[allow(clippy::too_many_lines)]
fn hqr2(
    hm: &mut DMatrix<f64>,
    vm: &mut DMatrix<f64>,
    d: &mut [f64],
    e: &mut [f64],
    want_vectors: bool,
) -> Result<()> {
    let nn = hm.nrows() as isize;
    let mut n = nn - 1;
    let low: isize = 0;
    let high: isize = nn - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0f64;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y);

    let idx = |i: isize, j: isize| (i as usize, j as usize);

    let mut norm = 0.0f64;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += hm[idx(i, j)].abs();
        }
    }
    if norm == 0.0 {
        for i in 0..nn as usize {
            d[i] = 0.0;
            e[i] = 0.0;
        }
        return Ok(());
    }

    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let max_total = 60 * nn as usize;

    while n >= low {
        total_iter += 1;
        if total_iter > max_total {
            return Err(Error::EigensolverFailure("QR iteration budget exhausted"));
        }

        // Look for a single small sub-diagonal element.
        let mut l = n;
        while l > low {
            s = hm[idx(l - 1, l - 1)].abs() + hm[idx(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if hm[idx(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root found.
            hm[idx(n, n)] += exshift;
            d[n as usize] = hm[idx(n, n)];
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots found.
            w = hm[idx(n, n - 1)] * hm[idx(n - 1, n)];
            p = (hm[idx(n - 1, n - 1)] - hm[idx(n, n)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            hm[idx(n, n)] += exshift;
            hm[idx(n - 1, n - 1)] += exshift;
            x = hm[idx(n, n)];

            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != 0.0 {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = 0.0;
                e[n as usize] = 0.0;
                x = hm[idx(n, n - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;

                for j in (n - 1)..nn {
                    z = hm[idx(n - 1, j)];
                    hm[idx(n - 1, j)] = q * z + p * hm[idx(n, j)];
                    hm[idx(n, j)] = q * hm[idx(n, j)] - p * z;
                }
                for i in 0..=n {
                    z = hm[idx(i, n - 1)];
                    hm[idx(i, n - 1)] = q * z + p * hm[idx(i, n)];
                    hm[idx(i, n)] = q * hm[idx(i, n)] - p * z;
                }
                for i in low..=high {
                    z = vm[idx(i, n - 1)];
                    vm[idx(i, n - 1)] = q * z + p * vm[idx(i, n)];
                    vm[idx(i, n)] = q * vm[idx(i, n)] - p * z;
                }
            } else {
                // Complex pair.
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // No convergence yet: form shift.
            x = hm[idx(n, n)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = hm[idx(n - 1, n - 1)];
                w = hm[idx(n, n - 1)] * hm[idx(n - 1, n)];
            }

            // Wilkinson's original ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    hm[idx(i, i)] -= x;
                }
                s = hm[idx(n, n - 1)].abs() + hm[idx(n - 1, n - 2)].abs();
                y = 0.75 * s;
                x = y;
                w = -0.4375 * s * s;
            }
            // MATLAB's ad hoc shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        hm[idx(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;

            // Look for two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                z = hm[idx(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / hm[idx(m + 1, m)] + hm[idx(m, m + 1)];
                q = hm[idx(m + 1, m + 1)] - z - r - s;
                r = hm[idx(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if hm[idx(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (hm[idx(m - 1, m - 1)].abs()
                                + z.abs()
                                + hm[idx(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                hm[idx(i, i - 2)] = 0.0;
                if i > m + 2 {
                    hm[idx(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            for k in m..n {
                let notlast = k != n - 1;
                if k != m {
                    p = hm[idx(k, k - 1)];
                    q = hm[idx(k + 1, k - 1)];
                    r = if notlast { hm[idx(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    hm[idx(k, k - 1)] = -s * x;
                } else if l != m {
                    hm[idx(k, k - 1)] = -hm[idx(k, k - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..nn {
                    p = hm[idx(k, j)] + q * hm[idx(k + 1, j)];
                    if notlast {
                        p += r * hm[idx(k + 2, j)];
                        hm[idx(k + 2, j)] -= p * z;
                    }
                    hm[idx(k, j)] -= p * x;
                    hm[idx(k + 1, j)] -= p * y;
                }
                for i in 0..=n.min(k + 3) {
                    p = x * hm[idx(i, k)] + y * hm[idx(i, k + 1)];
                    if notlast {
                        p += z * hm[idx(i, k + 2)];
                        hm[idx(i, k + 2)] -= p * r;
                    }
                    hm[idx(i, k)] -= p;
                    hm[idx(i, k + 1)] -= p * q;
                }
                for i in low..=high {
                    p = x * vm[idx(i, k)] + y * vm[idx(i, k + 1)];
                    if notlast {
                        p += z * vm[idx(i, k + 2)];
                        vm[idx(i, k + 2)] -= p * r;
                    }
                    vm[idx(i, k)] -= p;
                    vm[idx(i, k + 1)] -= p * q;
                }
            }
        }
    }

    if !want_vectors {
        return Ok(());
    }

    // Back-substitution on the quasi-triangular form.
    for nb in (0..nn).rev() {
        p = d[nb as usize];
        q = e[nb as usize];

        if q == 0.0 {
            // Real vector.
            let mut l = nb;
            hm[idx(nb, nb)] = 1.0;
            for i in (0..nb).rev() {
                w = hm[idx(i, i)] - p;
                r = 0.0;
                for j in l..=nb {
                    r += hm[idx(i, j)] * hm[idx(j, nb)];
                }
                if e[i as usize] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        if w != 0.0 {
                            hm[idx(i, nb)] = -r / w;
                        } else {
                            hm[idx(i, nb)] = -r / (eps * norm);
                        }
                    } else {
                        // Solve the 2x2 real block.
                        x = hm[idx(i, i + 1)];
                        y = hm[idx(i + 1, i)];
                        q = (d[i as usize] - p) * (d[i as usize] - p)
                            + e[i as usize] * e[i as usize];
                        t = (x * s - z * r) / q;
                        hm[idx(i, nb)] = t;
                        if x.abs() > z.abs() {
                            hm[idx(i + 1, nb)] = (-r - w * t) / x;
                        } else {
                            hm[idx(i + 1, nb)] = (-s - y * t) / z;
                        }
                    }
                    // Overflow control.
                    t = hm[idx(i, nb)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=nb {
                            hm[idx(j, nb)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            // Complex vector (stored across columns nb-1, nb).
            let mut l = nb - 1;

            if hm[idx(nb, nb - 1)].abs() > hm[idx(nb - 1, nb)].abs() {
                hm[idx(nb - 1, nb - 1)] = q / hm[idx(nb, nb - 1)];
                hm[idx(nb - 1, nb)] = -(hm[idx(nb, nb)] - p) / hm[idx(nb, nb - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -hm[idx(nb - 1, nb)], hm[idx(nb - 1, nb - 1)] - p, q);
                hm[idx(nb - 1, nb - 1)] = cr;
                hm[idx(nb - 1, nb)] = ci;
            }
            hm[idx(nb, nb - 1)] = 0.0;
            hm[idx(nb, nb)] = 1.0;
            for i in (0..nb - 1).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=nb {
                    ra += hm[idx(i, j)] * hm[idx(j, nb - 1)];
                    sa += hm[idx(i, j)] * hm[idx(j, nb)];
                }
                w = hm[idx(i, i)] - p;

                if e[i as usize] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        hm[idx(i, nb - 1)] = cr;
                        hm[idx(i, nb)] = ci;
                    } else {
                        x = hm[idx(i, i + 1)];
                        y = hm[idx(i + 1, i)];
                        let mut vr = (d[i as usize] - p) * (d[i as usize] - p)
                            + e[i as usize] * e[i as usize]
                            - q * q;
                        let vi = (d[i as usize] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps
                                * norm
                                * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        hm[idx(i, nb - 1)] = cr;
                        hm[idx(i, nb)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            hm[idx(i + 1, nb - 1)] =
                                (-ra - w * hm[idx(i, nb - 1)] + q * hm[idx(i, nb)]) / x;
                            hm[idx(i + 1, nb)] =
                                (-sa - w * hm[idx(i, nb)] - q * hm[idx(i, nb - 1)]) / x;
                        } else {
                            let (cr, ci) = cdiv(
                                -r - y * hm[idx(i, nb - 1)],
                                -s - y * hm[idx(i, nb)],
                                z,
                                q,
                            );
                            hm[idx(i + 1, nb - 1)] = cr;
                            hm[idx(i + 1, nb)] = ci;
                        }
                    }
                    t = hm[idx(i, nb - 1)].abs().max(hm[idx(i, nb)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=nb {
                            hm[idx(j, nb - 1)] /= t;
                            hm[idx(j, nb)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Back-transform to eigenvectors of the original matrix.
    for j in (low..nn).rev() {
        for i in low..=high {
            z = 0.0;
            for k in low..=j.min(high) {
                z += vm[idx(i, k)] * hm[idx(k, j)];
            }
            vm[idx(i, j)] = z;
        }
    }

    Ok(())
}

/// Symmetric positive definite square root via the spectral decomposition.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let se = a.clone().symmetric_eigen();
    let min_eig = se.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::UnsupportedMetric(
            "matrix is not positive definite, no real square root",
        ));
    }
    let mut sqrt_d = DMatrix::zeros(n, n);
    let mut inv_sqrt_d = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = se.eigenvalues[i].sqrt();
        sqrt_d[(i, i)] = s;
        inv_sqrt_d[(i, i)] = 1.0 / s;
    }
    let q = &se.eigenvectors;
    Ok((q * sqrt_d * q.transpose(), q * inv_sqrt_d * q.transpose()))
}

/// Orthonormal basis for the column span (thin QR with column pruning is not
/// needed here: callers guarantee full column rank).
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    qr.q()
}

/// Principal angles (radians, ascending) between the column spans of `x` and `y`.
pub fn principal_angles(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let qx = orthonormal_basis(x);
    let qy = orthonormal_basis(y);
    let m = qx.transpose() * qy;
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect()
}

/// (sigma_max, sigma_min) of a general matrix.
pub fn singular_extrema(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.singular_values();
    let max = sv.iter().fold(f64::MIN, |acc, x| acc.max(*x));
    let min = sv.iter().fold(f64::MAX, |acc, x| acc.min(*x));
    (max, min)
}

/// Max-norm of the entries.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// Unit 2-norm columns with the sign fixed so the largest-magnitude entry of
/// each column is positive. Determinism across eigensolver runs depends on it.
pub fn normalize_columns_signed(v: &mut DMatrix<f64>) {
    let n = v.nrows();
    for j in 0..v.ncols() {
        let mut col = v.column_mut(j);
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        let mut maxi = 0usize;
        let mut maxv = 0.0f64;
        for i in 0..n {
            if col[i].abs() > maxv {
                maxv = col[i].abs();
                maxi = i;
            }
        }
        if col[maxi] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Residual check `max_j ||A v_j - lambda_j v_j|| <= tol` for real eigenpairs.
pub fn max_eigen_residual(a: &DMatrix<f64>, values: &[f64], vectors: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (j, &lambda) in values.iter().enumerate() {
        let v = vectors.column(j);
        let r = a * v - lambda * DVector::from_column_slice(v.as_slice());
        worst = worst.max(r.norm());
    }
    worst
}
