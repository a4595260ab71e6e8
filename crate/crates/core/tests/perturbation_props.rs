//! Property tests of the perturbation calculus: closed-form identities on
//! random admissible inputs and the block structure of the similarity form.

mod common;

use coarsespace::perturbation::{
    perturbed_coarse_space, similarity_form_ordered, uniform_grid,
};
use coarsespace::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn admissible_case() -> impl Strategy<Value = PerturbationCase> {
    // lambda1, lambda2 with |l3| < |l2| <= |l1|, lt1*lt2 > 0, |gamma| < 1.
    (
        0.1f64..1.0,
        0.05f64..1.0,
        any::<bool>(),
        any::<bool>(),
        10.0f64..1000.0,
        10.0f64..1000.0,
        -0.9f64..0.9,
    )
        .prop_map(|(l1_mag, ratio2, s1, s2, lt1, lt2, gamma)| {
            let l1 = if s1 { l1_mag } else { -l1_mag };
            let l2_mag = l1_mag * (0.2 + 0.8 * ratio2);
            let l2 = if s2 { l2_mag } else { -l2_mag };
            let l3 = 0.1 * l2_mag;
            PerturbationCase::new(l1, l2, l3, lt1, lt2, gamma, 0.0).unwrap()
        })
}

proptest! {
    #[test]
    fn lambda_is_symmetric_under_joint_sign_flip(
        pc in admissible_case(),
        eps in -5.0f64..5.0,
    ) {
        let direct = pc.with_epsilon(eps).lambda_closed_form();
        let mirrored = PerturbationCase::new(
            pc.lambda1, pc.lambda2, pc.lambda3, pc.lt1, pc.lt2, -pc.gamma, -eps,
        )
        .unwrap()
        .lambda_closed_form();
        match (direct, mirrored) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "pole detected on one side only"),
        }
    }

    #[test]
    fn derivative_matches_finite_differences(
        pc in admissible_case(),
        eps in -4.0f64..4.0,
    ) {
        let at = pc.with_epsilon(eps);
        let Ok(d) = at.lambda_derivative() else { return Ok(()); };
        let h = 1e-6 * eps.abs().max(1.0);
        let (Ok(fp), Ok(fm)) = (
            pc.with_epsilon(eps + h).lambda_closed_form(),
            pc.with_epsilon(eps - h).lambda_closed_form(),
        ) else { return Ok(()); };
        let fd = (fp - fm) / (2.0 * h);
        let denom = d.abs().max(fd.abs());
        if denom > 1e-8 {
            prop_assert!(
                ((d - fd) / denom).abs() < 1e-5,
                "derivative {} vs fd {}", d, fd
            );
        }
    }

    #[test]
    fn case_b_minimum_sits_at_zero(
        pc in admissible_case().prop_filter("same signs", |pc| pc.lambda1 * pc.lambda2 > 0.0),
    ) {
        // Force gamma = 0 to land in case B.
        let pc = PerturbationCase::new(
            pc.lambda1, pc.lambda2, pc.lambda3, pc.lt1, pc.lt2, 0.0, 0.0,
        )
        .unwrap();
        prop_assert_eq!(pc.classify().unwrap().label, CaseLabel::B);
        let at_zero = pc.lambda_closed_form().unwrap().abs();
        for eps in uniform_grid(-3.0, 3.0, 121) {
            if let Ok(lam) = pc.with_epsilon(eps).lambda_closed_form() {
                prop_assert!(lam.abs() + 1e-12 >= at_zero);
            }
        }
    }
}

#[test]
fn lemma_structure_for_random_nested_coarse_spaces() {
    // 50 random coarse spaces drawn inside span{v_1..v_mt} for random mt:
    // top-right block vanishes and the trailing block is the eigenvalue
    // diagonal, entrywise to 1e-9.
    let p = build_problem(0.1, 0.0).unwrap();
    let s = build_smoother(&p, 0.5).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let m_tilde = rng.random_range(2..=20usize);
        let m = rng.random_range(1..=m_tilde);
        let mix = DMatrix::from_fn(m_tilde, m, |_, _| rng.random_range(-1.0..1.0));
        let mut basis = DMatrix::zeros(p.n, m_tilde);
        for col in 0..m_tilde {
            basis.set_column(col, &e.vectors.column(col));
        }
        let Ok(cs) = CoarseSpace::new(&basis * mix) else { continue };
        let op = assemble_t(&p, &s, &cs, CoarseKind::Custom).unwrap();
        let sf = similarity_form(&op, &e, m_tilde).unwrap();
        assert!(sf.hypothesis_ok, "trial {trial}: hypothesis violated");
        assert!(
            sf.top_right_max() <= 1e-9,
            "trial {trial}: top-right {}",
            sf.top_right_max()
        );
        assert!(
            sf.trailing_deviation(&e) <= 1e-9,
            "trial {trial}: trailing deviation {}",
            sf.trailing_deviation(&e)
        );
    }
}

#[test]
fn similarity_preserves_the_spectrum_multiset() {
    let p = build_problem(0.1, 0.0).unwrap();
    let s = build_smoother(&p, 1.0).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let m_tilde = rng.random_range(2..=10usize);
        let mix = DMatrix::from_fn(m_tilde, 1, |_, _| rng.random_range(-1.0..1.0));
        let mut basis = DMatrix::zeros(p.n, m_tilde);
        for col in 0..m_tilde {
            basis.set_column(col, &e.vectors.column(col));
        }
        let Ok(cs) = CoarseSpace::new(&basis * mix) else { continue };
        let op = assemble_t(&p, &s, &cs, CoarseKind::Custom).unwrap();
        let sf = similarity_form(&op, &e, m_tilde).unwrap();
        let mut of_t = common::sorted_magnitudes(&linalg::eigenvalues(&op.t).unwrap().re);
        let mut of_tt = common::sorted_magnitudes(&linalg::eigenvalues(&sf.t_tilde).unwrap().re);
        of_t.truncate(10);
        of_tt.truncate(10);
        for (a, b) in of_t.iter().zip(&of_tt) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn hypothesis_violation_is_flagged() {
    let p = build_problem(0.1, 0.0).unwrap();
    let s = build_smoother(&p, 0.5).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    // Coarse vector uses v_5, but m_tilde = 2 only spans {v_1, v_2}.
    let cs = CoarseSpace::new(DMatrix::from_column_slice(
        p.n,
        1,
        e.vectors.column(4).as_slice(),
    ))
    .unwrap();
    let op = assemble_t(&p, &s, &cs, CoarseKind::Custom).unwrap();
    let sf = similarity_form(&op, &e, 2).unwrap();
    assert!(!sf.hypothesis_ok);
    assert!(sf.hypothesis_residual > 1e-2);
}

#[test]
fn nilpotency_at_the_case_c_roots() {
    let p = build_problem(0.1, 0.0).unwrap();
    let s = build_smoother(&p, 1.0).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    let pair = select_pair(&e, PairPolicy::NegativeFirst).unwrap();
    let pc = PerturbationCase::from_eigensystem(&e, pair, 0.0).unwrap();
    let analysis = pc.classify().unwrap();
    assert_eq!(analysis.label, CaseLabel::C);
    assert_eq!(analysis.epsilon_stars.len(), 2);
    let mut order: Vec<usize> = vec![pair.0, pair.1];
    order.extend((0..e.n()).filter(|j| *j != pair.0 && *j != pair.1));
    for &eps in &analysis.epsilon_stars {
        let cs = perturbed_coarse_space(&e, pair, eps).unwrap();
        let op = assemble_t(&p, &s, &cs, CoarseKind::Perturbed).unwrap();
        let sf = similarity_form_ordered(&op, &e, &order, 2).unwrap();
        let block = sf.leading_block();
        let squared = &block * &block;
        assert!(
            linalg::max_abs(&squared) <= 1e-8,
            "eps = {eps}: ||block^2|| = {}",
            linalg::max_abs(&squared)
        );
        // The two-level radius drops to |lambda_3|.
        let rho = linalg::spectral_radius(&op.t).unwrap();
        assert!((rho - pc.lambda3.abs()).abs() <= 1e-6);
    }
}

#[test]
fn wide_sweep_brackets_both_nilpotency_points() {
    // (c = 0, ω = 1): the leading-block radius |λ(ε, 0)| dips to zero at two
    // symmetric ε values; a grid spanning them shows both dips.
    let p = build_problem(0.1, 0.0).unwrap();
    let s = build_smoother(&p, 1.0).unwrap();
    let e = eigensystem(&p, &s).unwrap();
    let pair = select_pair(&e, PairPolicy::NegativeFirst).unwrap();
    let grid = uniform_grid(-8.0, 8.0, 161);
    let table = sweep_epsilon(&p, &s, &e, pair, &grid).unwrap();
    let near_zero = |sign: f64| {
        table.rows.iter().any(|row| {
            row.epsilon * sign > 0.0
                && row.abs_lambda_closed.map(|l| l < 0.05).unwrap_or(false)
        })
    };
    assert!(near_zero(-1.0), "no dip at negative epsilon");
    assert!(near_zero(1.0), "no dip at positive epsilon");
    // Both roots sit inside the sweep range.
    for eps in &table.analysis.epsilon_stars {
        assert!(eps.abs() < 8.0);
    }
}

#[test]
fn leading_block_eigenvalue_matches_closed_form() {
    // The nonzero eigenvalue of the 2x2 block equals lambda(eps, gamma)
    // across randomized eps, for both the symmetric and advective problems.
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for c in [0.0, 10.0] {
        let p = build_problem(0.1, c).unwrap();
        let s = build_smoother(&p, 1.0).unwrap();
        let e = eigensystem(&p, &s).unwrap();
        let pair = select_pair(&e, PairPolicy::NegativeFirst).unwrap();
        let pc = PerturbationCase::from_eigensystem(&e, pair, 0.0).unwrap();
        let mut order: Vec<usize> = vec![pair.0, pair.1];
        order.extend((0..e.n()).filter(|j| *j != pair.0 && *j != pair.1));
        for _ in 0..10 {
            let eps = rng.random_range(-4.0..4.0);
            let Ok(expected) = pc.with_epsilon(eps).lambda_closed_form() else { continue };
            let cs = perturbed_coarse_space(&e, pair, eps).unwrap();
            let op = assemble_t(&p, &s, &cs, CoarseKind::Perturbed).unwrap();
            let sf = similarity_form_ordered(&op, &e, &order, 2).unwrap();
            let block = sf.leading_block();
            // Spectrum of the block is {0, lambda(eps, gamma)}: its trace.
            let lam_block = block[(0, 0)] + block[(1, 1)];
            assert!(
                (lam_block - expected).abs() <= 1e-8 * expected.abs().max(1.0),
                "c = {c}, eps = {eps}: block {lam_block} vs closed form {expected}"
            );
        }
    }
}
