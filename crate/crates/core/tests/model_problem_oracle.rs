//! Eigensystem checks against the independent analytic oracle.

mod common;

use coarsespace::*;
use common::{analytic_eigensystem, sorted_magnitudes};
use nalgebra::DMatrix;

fn setup(h: f64, c: f64, omega: f64) -> (GridProblem, JacobiSmoother, Eigensystem) {
    let p = build_problem(h, c).unwrap();
    let s = build_smoother(&p, omega).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    (p, s, e)
}

#[test]
fn analytic_and_numeric_eigenvalues_agree_for_diffusion() {
    let (_, _, e) = setup(0.1, 0.0, 0.5);
    let oracle = analytic_eigensystem(0.1, 0.0, 0.5);
    let ours = sorted_magnitudes(&e.values_g);
    let theirs = sorted_magnitudes(&oracle.values_g);
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    let ours_a = sorted_magnitudes(&e.values_a);
    let theirs_a = sorted_magnitudes(&oracle.values_a);
    for (a, b) in ours_a.iter().zip(&theirs_a) {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn analytic_and_numeric_eigenvalues_agree_for_advection() {
    let (_, _, e) = setup(0.1, 10.0, 1.0);
    let oracle = analytic_eigensystem(0.1, 10.0, 1.0);
    let ours = sorted_magnitudes(&e.values_a);
    let theirs = sorted_magnitudes(&oracle.values_a);
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() <= 1e-8 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn eigenvector_clusters_span_the_analytic_eigenspaces() {
    for c in [0.0, 10.0] {
        let (_, _, e) = setup(0.1, c, 0.5);
        let oracle = analytic_eigensystem(0.1, c, 0.5);
        // Group analytic pairs by A-eigenvalue and compare spans clusterwise.
        let mut position = 0usize;
        while position < e.n() {
            let members = e.cluster_members(position);
            let target = e.values_a[position];
            let scale = e.values_a.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let oracle_members: Vec<usize> = (0..oracle.values_a.len())
                .filter(|&j| (oracle.values_a[j] - target).abs() <= 1e-7 * scale)
                .collect();
            assert_eq!(
                members.len(),
                oracle_members.len(),
                "multiplicity mismatch at |lambda_A| = {target}"
            );
            let n = e.n();
            let mut ours = DMatrix::zeros(n, members.len());
            let mut theirs = DMatrix::zeros(n, members.len());
            for (col, &k) in members.iter().enumerate() {
                ours.set_column(col, &e.vectors.column(k));
            }
            for (col, &k) in oracle_members.iter().enumerate() {
                theirs.set_column(col, &oracle.vectors.column(k));
            }
            let angles = linalg::principal_angles(&ours, &theirs);
            let worst = angles.iter().fold(0.0f64, |a, x| a.max(*x));
            assert!(
                worst <= 1e-6,
                "c = {c}: cluster at lambda_A = {target} differs by angle {worst}"
            );
            position += members.len();
        }
    }
}

#[test]
fn spectral_mapping_ties_smoother_to_problem() {
    // Independent eigendecompositions of G and A must satisfy
    // lambda = 1 - omega (h^2/4) lambda_tilde after magnitude sorting.
    let (p, s, e) = setup(0.1, 10.0, 0.5);
    let g_eigs = linalg::eigenvalues(&s.g).unwrap();
    let mut direct: Vec<f64> = g_eigs.re.clone();
    direct.sort_by(f64::total_cmp);
    let mut mapped: Vec<f64> = e.values_a.iter().map(|lt| 1.0 - s.m_inv_scale * lt).collect();
    mapped.sort_by(f64::total_cmp);
    for (a, b) in direct.iter().zip(&mapped) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    let _ = p;
}

#[test]
fn symmetry_toggle() {
    let p0 = build_problem(0.1, 0.0).unwrap();
    assert_eq!((&p0.a - p0.a.transpose()).norm(), 0.0);
    let p1 = build_problem(0.1, 1e-6).unwrap();
    assert!((&p1.a - p1.a.transpose()).norm() > 0.0);
}

#[test]
fn real_spectrum_guard_near_the_limit() {
    // c = 19 < 2/h = 20: strongly advective but still diagonalizable with a
    // real spectrum.
    let p = build_problem(0.1, 19.0).unwrap();
    let ed = linalg::eigenvalues(&p.a).unwrap();
    let max_mag = ed
        .re
        .iter()
        .zip(&ed.im)
        .map(|(r, i)| r.hypot(*i))
        .fold(0.0f64, f64::max);
    assert!(ed.max_imag() <= 1e-8 * max_mag, "max imag {}", ed.max_imag());
}

#[test]
fn boundary_advection_is_defective() {
    // At c = 2/h the east/north couplings vanish and the matrix collapses to
    // a single defective eigenvalue; the computed spectrum scatters into the
    // complex plane and the eigensystem reports it rather than returning a
    // bogus basis.
    let p = build_problem(0.1, 20.0).unwrap();
    let s = build_smoother(&p, 1.0).unwrap();
    assert!(matches!(
        eigensystem(&p, &s),
        Err(Error::UnexpectedComplexSpectrum { .. }) | Err(Error::EigensolverFailure(_))
    ));
}

#[test]
fn eigenvectors_orthogonal_without_advection() {
    let (_, _, e) = setup(0.1, 0.0, 1.0);
    let vtv = e.vectors.transpose() * &e.vectors;
    let dev = linalg::max_abs(&(vtv - DMatrix::identity(e.n(), e.n())));
    assert!(dev <= 1e-9, "V^T V deviates by {dev}");
}

#[test]
fn eigenvectors_not_orthogonal_with_advection() {
    let (_, _, e) = setup(0.1, 10.0, 1.0);
    let vtv = e.vectors.transpose() * &e.vectors;
    let dev = linalg::max_abs(&(vtv - DMatrix::identity(e.n(), e.n())));
    assert!(dev > 1e-3, "advective eigenvectors unexpectedly orthogonal");
}
