mod common;

use common::{q_tensor, random_q, rotation, unit_vector};
use proptest::prelude::*;
use qtensor_core::equilibrium::PhaseConstants;
use qtensor_core::linear_ops::*;
use qtensor_core::quadrature::{moments_of, SphereQuadrature};
use qtensor_core::tensor::{QTensor, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

const ALPHAS: [f64; 4] = [7.0, 8.0, 10.0, 15.0];

fn quad() -> &'static SphereQuadrature {
    static Q: OnceLock<SphereQuadrature> = OnceLock::new();
    Q.get_or_init(SphereQuadrature::default_rule)
}

fn constants(alpha: f64) -> PhaseConstants {
    PhaseConstants::new(alpha, 1.0, 0.5).unwrap()
}

fn ctx(alpha: f64, n: Vec3) -> DirectorContext {
    DirectorContext::new(n, constants(alpha), quad()).unwrap()
}

fn default_ctx() -> &'static DirectorContext {
    static C: OnceLock<DirectorContext> = OnceLock::new();
    C.get_or_init(|| ctx(8.0, Vec3::new(0.2, -0.5, 0.8)))
}

#[test]
fn stored_moments_match_closed_form() {
    for &a in &ALPHAS {
        let c = ctx(a, Vec3::new(1.0, 2.0, -0.5));
        assert!((c.n.norm() - 1.0).abs() < 1e-12);
        let diff = c.moments.m4.max_abs_diff(&c.m4_closed_form());
        assert!(diff < 1e-10, "alpha {a}: {diff}");
        assert!((c.moments.q - c.q0()).norm() < 1e-10);
    }
}

#[test]
fn in_space_eigenvalue_of_qn() {
    for &a in &ALPHAS {
        let c = ctx(a, Vec3::new(0.0, 0.6, 0.8));
        let (s2, s4) = (c.constants.s2, c.constants.s4);
        let expected = 2.0 * (s2 - s4) / 7.0 + 2.0 * (s4 / 35.0 - 2.0 * s2 / 21.0 + 1.0 / 15.0);
        for e in in_space_basis(&c.n) {
            let out = apply_qn(&c, &e);
            assert!((out - e * expected).norm() < 1e-12);
            assert!((expected - 1.0 / a).abs() < 1e-10);
            let inv = apply_qn_inverse(&c, &e);
            assert!((inv - e * a).norm() < 1e-8 * a);
        }
    }
}

#[test]
fn qn_matches_quadrature_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &a in &ALPHAS {
        let c = ctx(a, Vec3::new(0.3, 0.3, -0.9));
        let mo = &c.moments;
        for _ in 0..20 {
            let b1 = random_q(&mut rng, 1.0);
            let b2 = random_q(&mut rng, 1.0);
            let cov = mo.m4.quad_form(&b1.to_matrix(), &b2.to_matrix())
                - mo.q.dot(&b1) * mo.q.dot(&b2);
            let got = apply_qn(&c, &b1).dot(&b2);
            assert!((got - cov).abs() < 1e-10, "alpha {a}: {got} vs {cov}");
        }
    }
}

#[test]
fn qn_inverse_composes_to_identity_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = default_ctx();
    for _ in 0..100 {
        let q = random_q(&mut rng, 1.0);
        assert!((apply_qn_inverse(c, &apply_qn(c, &q)) - q).norm() < 1e-10);
        assert!((apply_qn(c, &apply_qn_inverse(c, &q)) - q).norm() < 1e-10);
    }
    assert_eq!(apply_qn_inverse(c, &QTensor::ZERO).norm(), 0.0);
}

#[test]
fn hn_kernel_and_coercivity_at_each_alpha() {
    for &a in &ALPHAS {
        let c = ctx(a, Vec3::new(-0.4, 0.1, 0.7));
        for e in in_space_basis(&c.n) {
            assert!(apply_hn(&c, &e).norm() < 1e-10);
        }
        let c0 = coercivity_constant(&c);
        assert!(c0 > 0.0, "alpha {a}: c0 = {c0}");
        let mut rng = ChaCha8Rng::seed_from_u64(a as u64);
        let basis = out_space_basis(&c.n);
        for _ in 0..200 {
            let w = random_q(&mut rng, 1.0).to_basis();
            let q = basis[0] * w[0] + basis[1] * w[1] + basis[2] * w[2];
            let ray = apply_hn(&c, &q).dot(&q) / q.dot(&q);
            assert!(ray >= c0 - 1e-12);
        }
    }
}

#[test]
fn j_in_space_eigenvalue() {
    for &a in &ALPHAS {
        let c = ctx(a, Vec3::new(0.5, -0.5, 0.5));
        let (s2, s4) = (c.constants.s2, c.constants.s4);
        let expected = 1.0 / 3.0 + s2 / 6.0
            - 2.0 * (s2 - s4) / 7.0
            - 2.0 * (s4 / 35.0 - 2.0 * s2 / 21.0 + 1.0 / 15.0);
        for e in in_space_basis(&c.n) {
            let out = apply_j(&c.moments, &e.to_matrix());
            assert!((out - e * expected).norm() < 1e-10, "alpha {a}");
        }
    }
}

#[test]
fn beta_identities() {
    for &a in &ALPHAS {
        let r = beta_coefficients(&constants(a));
        assert!((r.beta2 + 2.0 * r.beta3).abs() < 1e-10, "alpha {a}: {r:?}");
        assert!(r.beta1_minus_half_beta3 > 0.0);
        let scale = r.closed_form.abs().max(1e-3);
        assert!((r.beta1_minus_half_beta3 - r.closed_form).abs() < 1e-8 * scale, "{r:?}");
    }
}

#[test]
fn beta_quadratic_form_matches_direct_evaluation() {
    let c = default_ctx();
    let r = beta_coefficients(&c.constants);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let b = random_q(&mut rng, 1.0);
        let q = apply_qn(c, &b);
        let direct = (b - q * c.constants.alpha).dot(&q);
        let bn = b.to_matrix() * c.n;
        let nnb = c.n.dot(&bn);
        let form = r.beta1 * nnb * nnb + r.beta2 * bn.norm_squared() + r.beta3 * b.dot(&b);
        assert!((direct - form).abs() < 1e-12, "{direct} vs {form}");
    }
}

#[test]
fn u_is_the_linearisation_of_m4() {
    let c = default_ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b0 = QTensor::uniaxial(c.constants.eta, &c.n);
    for _ in 0..3 {
        let e = random_q(&mut rng, 1.0);
        let h = 1e-4;
        let plus = moments_of(&(b0 + e * h), quad()).unwrap().m4;
        let minus = moments_of(&(b0 - e * h), quad()).unwrap().m4;
        let fd = plus.add(&minus.scale(-1.0)).scale(0.5 / h);
        let u = apply_u(&c.moments, &e);
        assert!(u.max_abs_diff(&fd) < 1e-6);
    }
    assert_eq!(apply_u(&c.moments, &QTensor::ZERO).max_abs_diff(&Default::default()), 0.0);
}

#[test]
fn u_at_isotropic_state() {
    let mo = moments_of(&QTensor::ZERO, quad()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = random_q(&mut rng, 1.0);
    let expected = mo.m6.contract2(&b.to_matrix());
    assert!(apply_u(&mo, &b).max_abs_diff(&expected) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_split_the_space(n in unit_vector(), q in q_tensor(1.0), p in q_tensor(1.0)) {
        let qi = project_in(&n, &q);
        let qo = project_out(&n, &q);
        prop_assert!((qi + qo - q).norm() < 1e-14);
        prop_assert!((project_in(&n, &qi) - qi).norm() < 1e-13);
        prop_assert!((project_out(&n, &qo) - qo).norm() < 1e-13);
        prop_assert!(qi.dot(&project_out(&n, &p)).abs() < 1e-13);
        let qn = q.to_matrix() * n;
        let qnn = n.dot(&qn);
        let expected = 2.0 * qn.norm_squared() - 2.0 * qnn * qnn;
        prop_assert!((qi.dot(&qi) - expected).abs() < 1e-13);
    }

    #[test]
    fn qn_is_self_adjoint_and_hn_lands_out(b1 in q_tensor(1.0), b2 in q_tensor(1.0)) {
        let c = default_ctx();
        let lhs = apply_qn(c, &b1).dot(&b2);
        let rhs = apply_qn(c, &b2).dot(&b1);
        prop_assert!((lhs - rhs).abs() < 1e-14);
        let h = apply_hn(c, &b1);
        prop_assert!((project_out(&c.n, &h) - h).norm() < 1e-12);
        let alt = apply_qn_inverse(c, &b1) - b1 * c.constants.alpha;
        prop_assert!((h - alt).norm() < 1e-10);
    }

    #[test]
    fn j_commutes_with_projections(q in q_tensor(1.0), p in q_tensor(1.0)) {
        let c = default_ctx();
        let j = |x: &QTensor| apply_j(&c.moments, &x.to_matrix());
        let a = j(&project_in(&c.n, &q)) - project_in(&c.n, &j(&q));
        let b = j(&project_out(&c.n, &q)) - project_out(&c.n, &j(&q));
        prop_assert!(a.norm() < 1e-10 && b.norm() < 1e-10);
        prop_assert!((j(&q).dot(&p) - j(&p).dot(&q)).abs() < 1e-12);
        let qo = project_out(&c.n, &q);
        let m = qtensor_core::closure::apply_mq(&c.moments, &qo.to_matrix());
        prop_assert!((m - m.transpose()).norm() < 1e-10);
    }

    #[test]
    fn operators_are_rotation_equivariant(r in rotation(), q in q_tensor(1.0)) {
        let c = default_ctx();
        let rc = DirectorContext { n: r * c.n, constants: c.constants, moments: c.moments.clone() };
        let qr = q.rotate(&r);
        prop_assert!((apply_qn(&rc, &qr) - apply_qn(c, &q).rotate(&r)).norm() < 1e-10);
        prop_assert!((apply_qn_inverse(&rc, &qr) - apply_qn_inverse(c, &q).rotate(&r)).norm() < 1e-10);
        prop_assert!((apply_hn(&rc, &qr) - apply_hn(c, &q).rotate(&r)).norm() < 1e-10);
        prop_assert!((project_in(&rc.n, &qr) - project_in(&c.n, &q).rotate(&r)).norm() < 1e-12);
    }
}
