mod common;

use common::*;
use proptest::prelude::*;
use qtensor_core::dynamics::{elastic_energy, ModelParams};
use qtensor_core::equilibrium::{
    alpha_of_eta, alpha_star, critical_alpha, critical_point_residual, critical_point_residual_derivative,
    oseen_frank_energy, solve_eta, Branch, FrankConstants, PhaseConstants,
};
use qtensor_core::spectral::Grid2d;
use qtensor_core::tensor::{QTensor, Vec3};
use qtensor_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `int_{-1}^{1} x^k e^{eta x^2} dx` by composite Gauss-Legendre with many
/// panels, evaluated with the exponential shift `e^{-eta}`.
fn ak_shifted(eta: f64, k: i32) -> f64 {
    let (x5, w5) = (
        [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664],
        [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1],
    );
    let panels = 2000;
    let h = 1.0 / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = (p as f64 + 0.5) * h;
        for (xi, wi) in x5.iter().zip(w5.iter()) {
            let x: f64 = c + 0.5 * h * xi;
            s += 0.5 * h * wi * x.powi(k) * (eta * (x * x - 1.0)).exp();
        }
    }
    2.0 * s
}

/// `S2(eta)` from the oracle integrals.
fn s2_oracle(eta: f64) -> f64 {
    let (a0, a2) = (ak_shifted(eta, 0), ak_shifted(eta, 2));
    (3.0 * a2 - a0) / (2.0 * a0)
}

/// Largest value of `alpha S2(eta) - eta` over a fine scan of `eta > 0`;
/// positive exactly when nonzero equilibria exist.
fn max_self_consistency_gap(alpha: f64) -> f64 {
    let (_, eta_star) = alpha_star();
    let mut best = f64::NEG_INFINITY;
    for i in 1..=2000 {
        let eta = eta_star * (0.9 + 0.2 * i as f64 / 2000.0);
        best = best.max(alpha * s2_oracle(eta) - eta);
    }
    best
}

#[test]
fn isotropic_root_always_present() {
    for alpha in [0.5, 3.0, 7.0, 8.0, 20.0] {
        assert_eq!(solve_eta(alpha, Branch::Isotropic).unwrap(), 0.0);
        assert!(critical_point_residual(0.0, alpha).unwrap().abs() < 1e-14);
    }
}

#[test]
fn stable_root_at_eight() {
    let (_, eta_star) = alpha_star();
    let eta = solve_eta(8.0, Branch::Stable).unwrap();
    assert!(critical_point_residual(eta, 8.0).unwrap().abs() <= 1e-10);
    assert!(eta > eta_star);
    // Self-consistency of the equilibrium: eta = alpha S2(eta).
    assert!((8.0 * s2_oracle(eta) - eta).abs() < 1e-9 * eta);
    let unstable = solve_eta(8.0, Branch::Unstable).unwrap();
    // Above the isotropic instability at 15/2 the second root is negative.
    assert!(unstable < 0.0 && unstable > -eta);
    assert!((8.0 * s2_oracle(unstable) - unstable).abs() < 1e-9 * unstable.max(1.0));
}

#[test]
fn critical_alpha_is_a_tangency() {
    let tol = 1e-10;
    let (a, e) = critical_alpha(tol).unwrap();
    assert!(critical_point_residual(e, a).unwrap().abs() <= tol);
    assert!(critical_point_residual_derivative(e, a).unwrap().abs() <= tol);
    assert!(a > 6.0 && a < 7.5, "alpha* = {a}");
    assert!((alpha_of_eta(e).unwrap() - a).abs() <= 1e-6 * a);
    let oracle = ak_shifted(e, 0) / (ak_shifted(e, 2) - ak_shifted(e, 4));
    assert!((oracle - a).abs() <= 1e-6 * a);
    assert!(critical_alpha(1e-12).is_err());
}

#[test]
fn root_count_changes_at_critical_alpha() {
    let (a, _) = alpha_star();
    let step = 1e-6;
    assert!(max_self_consistency_gap(a - step) < 0.0);
    assert!(max_self_consistency_gap(a + step) > 0.0);
    assert!(matches!(solve_eta(a - 1e-3, Branch::Stable), Err(Error::BranchNotPresent { .. })));
    let hi = solve_eta(a + 1e-3, Branch::Stable).unwrap();
    let lo = solve_eta(a + 1e-3, Branch::Unstable).unwrap();
    assert!(hi > lo && lo > 0.0);
}

#[test]
fn stable_eta_and_order_increase_with_alpha() {
    let (a_star, _) = alpha_star();
    let mut last = (0.0, 0.0);
    let n = 40;
    for i in 1..=n {
        let alpha = a_star + (20.0 - a_star) * i as f64 / n as f64;
        let pc = PhaseConstants::new(alpha, 1.0, 0.5).unwrap();
        assert!(pc.eta > last.0 && pc.s2 > last.1, "alpha {alpha}");
        last = (pc.eta, pc.s2);
    }
}

#[test]
fn invariants_hold_across_alpha() {
    let (a_star, _) = alpha_star();
    for alpha in [a_star + 0.5, 7.0, 8.0, 10.0, 15.0] {
        let pc = PhaseConstants::new(alpha, 1.0, 0.5).unwrap();
        let inv = pc.invariants().unwrap();
        assert!(inv.all_ok(), "alpha {alpha}: {inv:?}");
        let d = inv.dissipation;
        assert!(d[0] > 0.0 && d[1] > 0.0 && d[3] > 0.0, "alpha {alpha}: {d:?}");
        assert!(inv.dissipation_form_min > 0.0);
        // The combination alpha_5 + alpha_6 - gamma_2^2/gamma_1 is negative
        // for these coefficients; only the full quadratic form is positive.
        assert!(d[2] < 0.0);
        assert!(!inv.dissipation_coefficients_positive());
        // Independent recomputation of a few identities.
        let [x1, x2, x3] = pc.xi;
        assert!((x2 + x3 - 1.0 / alpha).abs() < 1e-10);
        assert!(x1 > -1.0 && x3 > 0.0);
        assert!((pc.psi[1] + pc.psi[2] - alpha).abs() < 1e-8 * alpha);
        let l = pc.leslie;
        assert!((l[1] + l[2] - (l[5] - l[4])).abs() < 1e-12);
        assert!((pc.gamma2 + pc.s2).abs() < 1e-12);
        let zeta = 1.0 / 3.0 + 2.0 / (3.0 * pc.s2) - 2.0 / (pc.s2 * alpha);
        assert!((pc.zeta - zeta).abs() < 1e-10);
        assert!((pc.s2 - s2_oracle(pc.eta)).abs() < 1e-12);
    }
}

#[test]
fn coercivity_violations_rejected() {
    assert!(matches!(PhaseConstants::new(8.0, 0.0, 0.5), Err(Error::Parameter(_))));
    assert!(matches!(PhaseConstants::new(8.0, 1.0, -0.6), Err(Error::Parameter(_))));
    assert!(PhaseConstants::new(5.0, 1.0, 0.5).is_err());
}

#[test]
fn frank_energy_of_constant_director_vanishes() {
    let g = Grid2d::new(16).unwrap();
    let n = vec![Vec3::new(0.6, 0.0, 0.8); g.len()];
    let k = FrankConstants { k1: 1.0, k2: 2.0, k3: 3.0, k4: 0.5 };
    assert_eq!(oseen_frank_energy(&n, &k, &g).unwrap(), 0.0);
    let bad = vec![Vec3::new(1.0, 1.0, 0.0); g.len()];
    assert!(oseen_frank_energy(&bad, &k, &g).is_err());
}

#[test]
fn one_constant_frank_energy_is_dirichlet() {
    let g = Grid2d::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3 {
        let n = smooth_director_field(&mut rng, 64, 2, 0.3);
        let k = FrankConstants { k1: 1.7, k2: 1.7, k3: 1.7, k4: 0.0 };
        let ef = oseen_frank_energy(&n, &k, &g).unwrap();
        let mut dirichlet = 0.0;
        for c in 0..3 {
            let comp: Vec<f64> = n.iter().map(|v| v[c]).collect();
            let [dx, dy, _] = g.gradient(&comp);
            let dens: Vec<f64> = dx.iter().zip(dy.iter()).map(|(a, b)| a * a + b * b).collect();
            dirichlet += g.integrate(&dens);
        }
        assert!((ef - 0.5 * 1.7 * dirichlet).abs() < 1e-9 * ef, "{ef} vs {}", 0.85 * dirichlet);
    }
}

#[test]
fn frank_energy_matches_elastic_energy_of_uniaxial_field() {
    let g = Grid2d::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for (l1, l2) in [(1.0, 0.5), (1.0, -0.3), (0.4, 2.0)] {
        let pc = PhaseConstants::new(8.0, l1, l2).unwrap();
        let params = ModelParams { l1, l2, epsilon: 0.02, ..ModelParams::default() };
        let n = smooth_director_field(&mut rng, 64, 2, 0.3);
        let q: Vec<QTensor> = n.iter().map(|d| QTensor::uniaxial(pc.s2, d)).collect();
        let fe = elastic_energy(&q, &g, &params).unwrap() / params.epsilon;
        let ef = oseen_frank_energy(&n, &pc.frank, &g).unwrap();
        assert!((fe - ef).abs() <= 1e-8 * fe.abs(), "L=({l1},{l2}): {fe} vs {ef}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stable_root_solves_equation(alpha in 6.8f64..40.0) {
        let (a_star, eta_star) = alpha_star();
        prop_assume!(alpha > a_star + 1e-6);
        let eta = solve_eta(alpha, Branch::Stable).unwrap();
        prop_assert!(critical_point_residual(eta, alpha).unwrap().abs() <= 1e-10);
        prop_assert!(eta >= eta_star);
        prop_assert!((alpha_of_eta(eta).unwrap() - alpha).abs() <= 1e-8 * alpha);
    }
}
