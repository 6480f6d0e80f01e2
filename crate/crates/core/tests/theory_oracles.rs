mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use subdiff::algorithms::Variant;
use subdiff::linalg::{self, CVec};
use subdiff::theory::{self, from_db};

const COOPERATIVE: [Variant; 3] = [Variant::Alg1, Variant::Alg1IdentityS, Variant::Alg2];

/// Toy instances with `L·N ≤ 12`.
fn toys(seed: u64) -> Vec<Toy> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for (n, l) in [(2, 2), (2, 3), (3, 2), (2, 5), (4, 3), (3, 4), (6, 2), (12, 1)] {
        for v in COOPERATIVE {
            out.push(Toy::random(&mut r, n, l, v));
        }
    }
    out
}

#[test]
fn model_matches_agentwise_expected_step() {
    for t in toys(1) {
        let m = t.model();
        let (b, r) = affine_from_expected_step(&t);
        assert!(max_abs_diff(&m.b_matrix, &b) < 1e-12, "{} B", t.variant);
        assert!(linalg::max_abs_vec(&(&m.r_vector - &r)) < 1e-12, "{} r", t.variant);
    }
}

#[test]
fn matrix_free_k_matches_dense_kronecker() {
    let mut r = rng(2);
    for t in toys(3) {
        let m = t.model();
        let nl = m.size();
        let k_dense = kron(&m.b_matrix.transpose(), &m.b_matrix.adjoint());
        let sigma = random_cmat(&mut r, nl, nl);
        let via_k = mat_of(&(&k_dense * vec_of(&sigma)), nl);
        assert!(max_abs_diff(&theory::apply_k(&m, &sigma), &via_k) < 1e-12);
    }
}

#[test]
fn k_adjoint_is_adjoint_under_trace_pairing() {
    let mut r = rng(4);
    for t in toys(5) {
        let m = t.model();
        let nl = m.size();
        let (f, s) = (random_cmat(&mut r, nl, nl), random_cmat(&mut r, nl, nl));
        let lhs = linalg::trace_product(&theory::apply_k_adjoint(&m, &f), &s);
        let rhs = linalg::trace_product(&f, &theory::apply_k(&m, &s));
        assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }
}

#[test]
fn spectral_radius_of_k_is_square_of_b() {
    for t in toys(6) {
        let m = t.model();
        let k_dense = kron(&m.b_matrix.transpose(), &m.b_matrix.adjoint());
        let rho_b = m.spectral_radius().unwrap();
        assert!((power_radius(&k_dense) - rho_b * rho_b).abs() < 1e-10, "{}", t.variant);
        assert!((power_radius(&m.b_matrix) - rho_b).abs() < 1e-10);
    }
}

#[test]
fn steady_state_matches_dense_solve() {
    for t in toys(7) {
        let m = t.model();
        let nl = m.size();
        let k_dense = kron(&m.b_matrix.transpose(), &m.b_matrix.adjoint());
        let lhs = linalg::identity(nl * nl) - k_dense;
        let rhs = vec_of(&linalg::identity(nl)).unscale(t.n as f64);
        let sigma = mat_of(&lhs.lu().solve(&rhs).unwrap(), nl);
        let e_inf = -(linalg::identity(nl) - &m.b_matrix).lu().solve(&m.r_vector).unwrap();
        let want = linalg::trace_product(&m.s_matrix(&e_inf), &sigma).re;
        let got = theory::steady_state_msd(&m).unwrap().linear;
        assert!(((got - want) / want).abs() < 1e-10, "{}: {got} vs {want}", t.variant);
    }
}

/// `Φ_n = B Φ_{n−1} B* + S_{n−1}`, `Φ_0 = v₀v₀*`, `ζ_n = tr Φ_n / N`.
fn phi_route(m: &theory::TheoreticalModel, v0: &CVec, n_iter: usize) -> Vec<f64> {
    let mut phi = v0 * v0.adjoint();
    let mut mean = v0.clone();
    let mut out = vec![phi.trace().re / m.n_agents as f64];
    for _ in 0..n_iter {
        phi = &m.b_matrix * &phi * m.b_matrix.adjoint() + m.s_matrix(&mean);
        mean = &m.b_matrix * &mean - &m.r_vector;
        out.push(phi.trace().re / m.n_agents as f64);
    }
    out
}

#[test]
fn transient_matches_second_moment_route() {
    for t in toys(8) {
        let m = t.model();
        let v0 = t.w_opt();
        let got = theory::transient_msd(&m, &v0, 300).unwrap().linear();
        let want = phi_route(&m, &v0, 300);
        for (n, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(((g - w) / w).abs() < 1e-9, "{} n={n}: {g} vs {w}", t.variant);
        }
    }
}

#[test]
fn transient_converges_to_steady_state() {
    let mut r = rng(9);
    for v in COOPERATIVE {
        let t = Toy::random(&mut r, 3, 3, v);
        let m = t.model();
        let rho = m.spectral_radius().unwrap();
        let n_iter = ((-30.0 / rho.ln()).ceil() as usize).max(10);
        let curve = theory::transient_msd(&m, &t.w_opt(), n_iter).unwrap();
        let ss = theory::steady_state_msd(&m).unwrap();
        let last = from_db(*curve.values_db.last().unwrap());
        assert!(((last - ss.linear) / ss.linear).abs() < 1e-6, "{v}: {last} vs {}", ss.linear);
    }
}

#[test]
fn mean_recursion_follows_affine_map() {
    for t in toys(10).into_iter().take(9) {
        let m = t.model();
        let v0 = t.w_opt();
        let means = theory::mean_recursion(&m, &v0, 20);
        let mut e = v0.clone();
        for (n, got) in means.iter().enumerate() {
            assert!(linalg::max_abs_vec(&(got - &e)) < 1e-10, "n={n}");
            e = expected_error_step(&t, &e);
        }
    }
}

#[test]
fn matched_model_has_no_bias() {
    let mut r = rng(11);
    for v in [Variant::Alg1, Variant::Alg1IdentityS] {
        let mut t = Toy::random(&mut r, 4, 3, v);
        let u = random_cvec(&mut r, t.pair.rank(), 1.0);
        let common = t.pair.theta() * u;
        for k in 0..t.n {
            let local = t.pair.p_theta_perp() * random_cvec(&mut r, t.l, 1.0);
            t.optima[k] = &common + local;
        }
        t.envs = t.envs.into_iter().zip(&t.optima).map(|(e, w)| e.with_w_opt(w.clone())).collect();
        let m = t.model();
        assert!(linalg::max_abs_vec(&m.r_vector) < 1e-12);
        assert!(linalg::max_abs_vec(&theory::bias(&m).unwrap()) < 1e-12);
    }
}

#[test]
fn zero_step_without_cooperation_is_rejected_as_marginal() {
    let mut r = rng(12);
    let mut t = Toy::random(&mut r, 2, 2, Variant::Alg1IdentityS);
    t.mu = 0.0;
    t.a = subdiff::network::identity_combination(2);
    let m = t.model();
    assert!((m.spectral_radius().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(theory::transient_msd(&m, &t.w_opt(), 5).unwrap_err().kind(), "unstable");
}

#[test]
fn zero_step_operator_norm_is_at_most_one() {
    let mut r = rng(13);
    for _ in 0..100 {
        let n = r.random_range(2..=8);
        let l = r.random_range(1..=5);
        let a = random_doubly_stochastic(&mut r, n);
        let m = r.random_range(1..=l);
        let pair = random_orthonormal_pair(&mut r, l, m);
        let cop = theory::combine_operator(&a, &pair);
        assert!(linalg::operator_norm(&cop) <= 1.0 + 1e-12);
    }
}

#[test]
fn predictor_rejects_unsupported_inputs() {
    let mut r = rng(14);
    let t = Toy::random(&mut r, 2, 2, Variant::Alg1);
    let err = theory::build_model(Variant::NoncoopLms, &t.a, &t.pair, &t.envs, 0.1, 0.0, &t.w_opt()).unwrap_err();
    assert_eq!(err.kind(), "unsupported");
    let mut big = t;
    big.mu = 50.0;
    let m = big.model();
    assert_eq!(theory::steady_state_msd(&m).unwrap_err().kind(), "unstable");
}

#[test]
fn weighting_fixed_point_solves_lyapunov_equation() {
    for t in toys(15).into_iter().step_by(3) {
        let m = t.model();
        let (sigma, _) = theory::weighting_fixed_point(&m).unwrap();
        let residual = &sigma - theory::apply_k(&m, &sigma) - linalg::identity(m.size()).unscale(t.n as f64);
        assert!(linalg::max_abs(&residual) < 1e-10 * linalg::max_abs(&sigma));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projectors_of_random_pairs_are_complementary(seed in any::<u64>(), l in 1usize..6, m_frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let m = 1 + ((l - 1) as f64 * m_frac) as usize;
        let pair = subdiff::subspace::SubspacePair::from_theta(random_cmat(&mut r, l, m)).unwrap();
        let p = pair.p_theta();
        let eye = linalg::identity(l);
        prop_assert!(max_abs_diff(&(p * p), p) < 1e-10);
        prop_assert!(max_abs_diff(&(p + pair.p_theta_perp()), &eye) < 1e-12);
        prop_assert!(linalg::max_abs(&(p * pair.theta_perp())) < 1e-10);
    }

    #[test]
    fn s_matrix_is_hermitian(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = Toy::random(&mut r, 2, 3, COOPERATIVE[(seed % 3) as usize]);
        let m = t.model();
        let e = random_cvec(&mut r, m.size(), 1.0);
        let s = m.s_matrix(&e);
        prop_assert!(max_abs_diff(&s, &s.adjoint()) < 1e-12);
    }

    #[test]
    fn stack_unstack_roundtrip(seed in any::<u64>(), n in 1usize..6, l in 1usize..6) {
        let mut r = rng(seed);
        let vs: Vec<CVec> = (0..n).map(|_| random_cvec(&mut r, l, 1.0)).collect();
        prop_assert_eq!(theory::unstack(&theory::stack(&vs), l), vs);
    }
}

#[test]
fn db_conversion_roundtrip() {
    for x in [1e-6, 0.3, 1.0, 42.0] {
        assert!((from_db(theory::to_db(x)) - x).abs() < 1e-12 * x);
    }
    assert_eq!(theory::to_db(1.0), 0.0);
}
