mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use qtensor_core::dynamics::*;
use qtensor_core::equilibrium::PhaseConstants;
use qtensor_core::linear_ops::{apply_hn, apply_j, DirectorContext};
use qtensor_core::quadrature::SphereQuadrature;
use qtensor_core::spectral::Grid2d;
use qtensor_core::tensor::{Mat3, QTensor, Vec3};
use qtensor_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::mms;

fn quad() -> &'static SphereQuadrature {
    static Q: OnceLock<SphereQuadrature> = OnceLock::new();
    Q.get_or_init(SphereQuadrature::default_rule)
}

fn alpha8() -> &'static PhaseConstants {
    static C: OnceLock<PhaseConstants> = OnceLock::new();
    C.get_or_init(|| PhaseConstants::new(8.0, 1.0, 0.5).unwrap())
}

fn traceless(m: Mat3) -> Mat3 {
    m - Mat3::identity() * (m.trace() / 3.0)
}

fn mode_field(grid: &Grid2d, a: &Mat3, kx: f64, ky: f64, phase: f64) -> Vec<QTensor> {
    (0..grid.len())
        .map(|i| {
            let (x, y) = grid.coords(i);
            QTensor::from_matrix(&(a * (kx * x + ky * y + phase).cos()))
        })
        .collect()
}

#[test]
fn params_validation_lists_every_violation() {
    assert!(ModelParams::default().validate().is_ok());
    let bad = ModelParams {
        gamma: 1.0,
        de: 0.0,
        re: -1.0,
        epsilon: -0.1,
        l1: 0.0,
        delta: 0.5,
        ..ModelParams::default()
    };
    let v = bad.violations();
    assert!(v.len() >= 6, "{v:?}");
    assert!(v.iter().any(|s| s.contains("gamma")));
    assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
    let l2 = ModelParams {
        l2: -0.6,
        ..ModelParams::default()
    };
    assert_eq!(l2.violations().len(), 1);
    assert_eq!(ModelParams::default().monitor_margin(), 0.05);
}

#[test]
fn params_serde_names() {
    let p: ModelParams = serde_json::from_str(
        r#"{"alpha": 7.5, "epsilon": 0.01, "De": 0.5, "Re": 2.0, "gamma": 0.3,
            "L1": 1.0, "L2": 0.2, "delta": 0.1}"#,
    )
    .unwrap();
    assert_eq!(p.de, 0.5);
    assert_eq!(p.l2, 0.2);
    assert!(serde_json::from_str::<ModelParams>(r#"{"alpha": 7.5, "bogus": 1}"#).is_err());
}

#[test]
fn elastic_operator_on_single_modes() {
    let grid = Grid2d::new(16).unwrap();
    let (l1, l2) = (1.0, 0.7);
    let a = traceless(Mat3::new(0.3, 0.2, -0.5, 0.2, -0.1, 0.4, -0.5, 0.4, 0.6));
    for (kx, ky) in [(1.0, 0.0), (2.0, -3.0), (0.0, 4.0)] {
        let q = mode_field(&grid, &a, kx, ky, 0.3);
        let l = ell_operator(&q, &grid, l1, l2).unwrap();
        let k = Vec3::new(kx, ky, 0.0);
        let ak = a * k;
        let amp = traceless(a * (l1 * k.norm_squared()) + (k * ak.transpose() + ak * k.transpose()) * l2);
        let sym = ell_symbol(kx, ky, l1, l2);
        let from_symbol = QTensor::from_basis((sym * nalgebra::Vector5::from(QTensor::from_matrix(&a).to_basis())).into());
        assert!((from_symbol.to_matrix() - amp).norm() < 1e-12);
        for (i, li) in l.iter().enumerate() {
            let (x, y) = grid.coords(i);
            let expected = amp * (kx * x + ky * y + 0.3).cos();
            assert!((li.to_matrix() - expected).norm() < 1e-11);
        }
    }
}

proptest! {
    #[test]
    fn elastic_symbol_is_coercive(kx in -6i32..7, ky in -6i32..7, l1 in 0.1f64..2.0, r in -0.49f64..2.0) {
        prop_assume!(kx != 0 || ky != 0);
        let l2 = r * l1;
        let (kx, ky) = (kx as f64, ky as f64);
        let s = ell_symbol(kx, ky, l1, l2);
        prop_assert!((s - s.transpose()).norm() < 1e-12);
        let k2 = kx * kx + ky * ky;
        let min = s.symmetric_eigenvalues().min();
        let bound = l1.min(l1 + 4.0 / 3.0 * l2) * k2;
        prop_assert!(min >= bound - 1e-10 * k2);
        prop_assert!(min <= bound + 1e-10 * k2);
    }

    #[test]
    fn homogeneous_rhs_is_frame_indifferent(q in common::physical_q(0.1), r in common::rotation(), m in proptest::array::uniform9(-1.0f64..1.0)) {
        let p = ModelParams::default();
        let kappa = traceless(Mat3::from_row_slice(&m));
        let a = homogeneous_rhs(&HomState::new(q, kappa, 0.0).unwrap(), &p, quad()).unwrap();
        let rotated = HomState::new(q.rotate(&r), r * kappa * r.transpose(), 0.0).unwrap();
        let b = homogeneous_rhs(&rotated, &p, quad()).unwrap();
        prop_assert!((a.rotate(&r) - b).norm() < 1e-8 * (1.0 + a.norm()));
    }
}

#[test]
fn distortion_stress_balances_elastic_force() {
    let n = 32;
    let grid = Grid2d::new(n).unwrap();
    let (l1, l2) = (1.0, 0.6);
    let a = traceless(Mat3::new(0.3, 0.2, -0.5, 0.2, -0.1, 0.4, -0.5, 0.4, 0.6));
    let b = traceless(Mat3::new(-0.2, 0.5, 0.1, 0.5, 0.4, -0.3, 0.1, -0.3, 0.0));
    let q1 = mode_field(&grid, &a, 1.0, 2.0, 0.0);
    let q2 = mode_field(&grid, &b, -3.0, 1.0, 0.7);
    let q: Vec<QTensor> = q1.iter().zip(&q2).map(|(x, y)| *x + *y).collect();
    let sigma = distortion_stress(&q, &q, &grid, l1, l2).unwrap();
    let l = ell_operator(&q, &grid, l1, l2).unwrap();

    // div sigma - L(Q) : grad Q must be a gradient: curl-free, zero z part.
    let col = |i: usize, j: usize| -> Vec<f64> { sigma.iter().map(|s| s[(j, i)]).collect() };
    let mut force = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for i in 0..3 {
        for j in 0..2 {
            let d = grid.gradient(&col(i, j))[j].clone();
            for p in 0..grid.len() {
                force[i][p] += d[p];
            }
        }
    }
    let comps: Vec<Vec<f64>> = (0..5)
        .map(|c| q.iter().map(|t| t.components()[c]).collect())
        .collect();
    let grads: Vec<[Vec<f64>; 3]> = comps.iter().map(|c| grid.gradient(c)).collect();
    for i in 0..2 {
        for p in 0..grid.len() {
            let dq = QTensor::from_components(std::array::from_fn(|c| grads[c][i][p])).unwrap();
            force[i][p] -= l[p].dot(&dq);
        }
    }
    let curl: Vec<f64> = {
        let fy_x = grid.gradient(&force[1])[0].clone();
        let fx_y = grid.gradient(&force[0])[1].clone();
        fy_x.iter().zip(&fx_y).map(|(a, b)| a - b).collect()
    };
    let scale = force[0].iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(scale > 1e-2);
    assert!(curl.iter().all(|c| c.abs() < 1e-10), "curl {:e}", curl.iter().map(|c| c.abs()).fold(0.0, f64::max));
    assert!(force[2].iter().all(|c| c.abs() < 1e-12));

    // Bilinear in its two arguments.
    let s12 = distortion_stress(&q1, &q2, &grid, l1, l2).unwrap();
    let s12b = distortion_stress(&q1, &q2.iter().map(|t| *t * 2.0).collect::<Vec<_>>(), &grid, l1, l2).unwrap();
    for (x, y) in s12.iter().zip(&s12b) {
        assert!((x * 2.0 - y).norm() < 1e-12);
    }
    assert!(distortion_stress(&q[..10], &q, &grid, l1, l2).is_err());
}

#[test]
fn chemical_potential_is_the_energy_gradient() {
    let n = 16;
    let params = ModelParams::default();
    let grid = Grid2d::new(n).unwrap();
    let state = random_smooth_state(n, 3, params.delta, 0.0, 3).unwrap();
    let mu = mu_q(&state.q, &grid, &params, quad()).unwrap();
    let dir = random_smooth_state(n, 5, params.delta, 0.0, 2).unwrap();
    let pert: Vec<QTensor> = dir.q.iter().map(|x| *x * 0.3).collect();
    let energy = |s: f64| {
        let q: Vec<QTensor> = state.q.iter().zip(&pert).map(|(a, b)| *a + *b * s).collect();
        let st = FieldState::new(n, 0.0, q, state.v.clone()).unwrap();
        let e = energy_report(&st, &params, (64, 128)).unwrap();
        e.bulk + e.elastic
    };
    let h = 1e-5;
    let fd = (energy(h) - energy(-h)) / (2.0 * h);
    let pairing: Vec<f64> = mu.iter().zip(&pert).map(|(a, b)| a.dot(b)).collect();
    let exact = grid.integrate(&pairing);
    assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0), "fd {fd} exact {exact}");
}

#[test]
fn homogeneous_equilibrium_is_stationary() {
    let p = ModelParams::default();
    let c = alpha8();
    let n = Vec3::new(0.2, -0.6, 0.7).normalize();
    let s = HomState::new(QTensor::uniaxial(c.s2, &n), Mat3::zeros(), 0.0).unwrap();
    assert!(homogeneous_rhs(&s, &p, quad()).unwrap().norm() < 1e-9);
}

#[test]
fn isotropic_state_responds_to_strain_only() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let kappa = traceless(common::random_matrix(&mut rng, 1.0));
        let s = HomState::new(QTensor::zero(), kappa, 0.0).unwrap();
        let d = s.d();
        let got = homogeneous_rhs(&s, &p, quad()).unwrap();
        assert!((got.to_matrix() - d * 0.4).norm() < 1e-12);
    }
}

#[test]
fn homogeneous_linearisation_matches_operators() {
    let p = ModelParams::default();
    let c = alpha8();
    let n = Vec3::new(0.3, 0.1, -0.9).normalize();
    let ctx = DirectorContext::new(n, *c, quad()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..4 {
        let e = common::random_q(&mut rng, 1.0);
        let h = 1e-5;
        let at = |s: f64| {
            let st = HomState::new(ctx.q0() + e * s, Mat3::zeros(), 0.0).unwrap();
            homogeneous_rhs(&st, &p, quad()).unwrap()
        };
        let fd = (at(h) - at(-h)) * (0.5 / h);
        let lin = apply_j(&ctx.moments, &apply_hn(&ctx, &e).to_matrix()) * (-4.0 / p.de);
        assert!((fd - lin).norm() < 1e-6 * lin.norm().max(1.0), "{} vs {}", fd.norm(), lin.norm());
    }
}

#[test]
fn rk4_is_fourth_order() {
    let p = ModelParams::default();
    let mut kappa = Mat3::zeros();
    kappa[(0, 1)] = 1.0;
    let q0 = QTensor::uniaxial(0.45, &Vec3::new(0.0, 1.0, 0.3).normalize());
    let start = HomState::new(q0, kappa, 0.0).unwrap();
    let t_end = 0.4;
    let run = |steps: usize| {
        let mut integ = HomogeneousIntegrator::new(p, quad()).unwrap();
        let mut s = start;
        for _ in 0..steps {
            s = integ.step(&s, t_end / steps as f64).unwrap();
        }
        assert_eq!(integ.rejected_steps, 0);
        s
    };
    let reference = run(256);
    assert!((reference.t - t_end).abs() < 1e-12);
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&k| (run(k).q - reference.q).norm()).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 3.6, "order {order} from {errs:?}");
    }
}

#[test]
fn homogeneous_step_rejects_bad_input() {
    let p = ModelParams::default();
    let s = HomState::new(QTensor::zero(), Mat3::zeros(), 0.0).unwrap();
    assert!(matches!(step_homogeneous(&s, 0.0, &p, quad()), Err(Error::Parameter(_))));
    let mut k = Mat3::zeros();
    k[(0, 0)] = 1.0;
    assert!(matches!(HomState::new(QTensor::zero(), k, 0.0), Err(Error::Parameter(_))));
    let outside = QTensor::uniaxial(0.95, &Vec3::z());
    let s = HomState::new(outside, Mat3::zeros(), 0.0).unwrap();
    assert!(step_homogeneous(&s, 0.01, &p, quad()).is_err());
}

#[test]
fn uniform_equilibrium_field_is_stationary() {
    let params = ModelParams::default();
    let q0 = QTensor::uniaxial(alpha8().s2, &Vec3::new(1.0, 1.0, 0.5).normalize());
    let mut solver = FieldSolver::new(8, params, SolverOptions::default()).unwrap();
    let mut st = FieldState::uniform(8, q0);
    for _ in 0..5 {
        let (next, info) = solver.step(&st, 0.05).unwrap();
        assert_eq!(info.halvings, 0);
        st = next;
    }
    assert!((st.t - 0.25).abs() < 1e-14);
    for q in &st.q {
        assert!((*q - q0).norm() < 1e-9);
    }
    assert!(st.max_speed() < 1e-12);
}

#[test]
fn random_initial_data_properties() {
    let a = random_smooth_state(32, 9, 0.1, 0.5, 3).unwrap();
    let b = random_smooth_state(32, 9, 0.1, 0.5, 3).unwrap();
    let c = random_smooth_state(32, 10, 0.1, 0.5, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.physical_margin() >= 0.1);
    assert!((a.max_speed() - 0.5).abs() < 1e-12);
    let grid = Grid2d::new(32).unwrap();
    let div: Vec<f64> = {
        let dx = grid.gradient(&a.v[0])[0].clone();
        let dy = grid.gradient(&a.v[1])[1].clone();
        dx.iter().zip(&dy).map(|(x, y)| x + y).collect()
    };
    assert!(div.iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn energy_ledger_components() {
    let params = ModelParams::default();
    let st = random_smooth_state(16, 1, params.delta, 0.4, 3).unwrap();
    let e = energy_report(&st, &params, (16, 32)).unwrap();
    for x in [e.kinetic, e.elastic, e.viscous, e.closure, e.rotational, e.dissipation] {
        assert!(x >= 0.0);
    }
    assert!((e.dissipation - (e.viscous + e.closure + e.rotational)).abs() < 1e-12 * e.dissipation);
    let w = (1.0 - params.gamma) / (params.re * params.de);
    assert!((e.total - (e.kinetic + w * (e.bulk + e.elastic))).abs() < 1e-12 * e.total.abs());
    let kin = 0.5 * Grid2d::new(16).unwrap().integrate(
        &(0..256).map(|i| st.v.iter().map(|c| c[i] * c[i]).sum::<f64>()).collect::<Vec<_>>(),
    );
    assert!((e.kinetic - kin).abs() < 1e-13);
    assert!((e.min_margin - st.physical_margin()).abs() < 1e-14);
}

#[test]
fn semi_discrete_energy_identity() {
    // dE/dt along the semi-discrete flow equals minus the dissipation.
    let params = ModelParams::default();
    let n = 32;
    let st = random_smooth_state(n, 21, params.delta, 0.4, 2).unwrap();
    let mut solver = FieldSolver::new(n, params, SolverOptions::default()).unwrap();
    let (rq, rv) = solver.tendency(&st).unwrap();
    let e0 = solver.energy(&st).unwrap();
    let h = 1e-6;
    let shifted = |s: f64| {
        let q = st.q.iter().zip(&rq).map(|(a, b)| *a + *b * s).collect();
        let v = std::array::from_fn(|c| st.v[c].iter().zip(&rv[c]).map(|(a, b)| a + b * s).collect());
        FieldState::new(n, 0.0, q, v).unwrap()
    };
    let ep = solver.energy(&shifted(h)).unwrap().total;
    let em = solver.energy(&shifted(-h)).unwrap().total;
    let dedt = (ep - em) / (2.0 * h);
    assert!((dedt + e0.dissipation).abs() < 1e-7 * e0.dissipation, "{dedt} vs {}", -e0.dissipation);
}

#[test]
fn short_unforced_run_dissipates() {
    let params = ModelParams::default();
    let mut solver = FieldSolver::new(16, params, SolverOptions::default()).unwrap();
    let mut st = random_smooth_state(16, 4, params.delta, 0.5, 2).unwrap();
    let dt = solver.suggested_dt(&st);
    assert!(dt <= 0.05 * params.de + 1e-15);
    let mut prev = solver.energy(&st).unwrap().total;
    for _ in 0..30 {
        let (next, info) = solver.step(&st, dt).unwrap();
        assert!(info.divergence <= 1e-10);
        assert!(info.energy.total <= prev + 1e-10 * prev.abs());
        prev = info.energy.total;
        st = next;
    }
    assert!(st.physical_margin() >= params.monitor_margin());
}

#[test]
fn solver_rejects_bad_input() {
    let p = ModelParams::default();
    assert!(FieldSolver::new(7, p, SolverOptions::default()).is_err());
    let bad = SolverOptions { cbar_factor: 0.5, ..SolverOptions::default() };
    assert!(FieldSolver::new(8, p, bad).is_err());
    let mut s = FieldSolver::new(8, p, SolverOptions::default()).unwrap();
    let st = FieldState::uniform(16, QTensor::zero());
    assert!(s.step(&st, 0.1).is_err());
    let st = FieldState::uniform(8, QTensor::zero());
    assert!(s.step(&st, -0.1).is_err());
    assert!(FieldState::new(8, 0.0, vec![QTensor::zero(); 3], std::array::from_fn(|_| vec![0.0; 64])).is_err());
}

#[test]
fn snapshot_round_trip() {
    let params = ModelParams::default();
    let st = random_smooth_state(8, 2, params.delta, 0.3, 2).unwrap();
    let bytes = snapshot::encode(&st);
    assert_eq!(&bytes[..8], b"QTSNAP01");
    assert_eq!(bytes.len(), 8 + 24 + 8 + 8 * 64 * 8);
    assert_eq!(snapshot::decode(&bytes).unwrap(), st);
    assert!(snapshot::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(snapshot::decode(&corrupt).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.bin");
    snapshot::write(&path, &st, &params).unwrap();
    assert_eq!(snapshot::read(&path).unwrap(), st);
    let side: snapshot::Sidecar =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("snap.bin.json")).unwrap()).unwrap();
    assert_eq!(side.nx, 8);
    assert_eq!(side.params, params);
}

#[test]
fn manufactured_solution_temporal_order() {
    let errs = mms::temporal_errors(16, 0.4, &[8, 16, 32, 64]);
    let slopes: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    for s in &slopes {
        assert!(*s >= 1.8, "slopes {slopes:?} errors {errs:?}");
    }
}

#[test]
fn manufactured_solution_spatial_convergence() {
    let res = mms::spatial_residuals(128, &[16, 32, 64]);
    assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
    // Faster than any fixed power: each halving gains more than the last.
    assert!(res[1] / res[2] > res[0] / res[1], "{res:?}");
    assert!(res[2] < 1e-7, "{res:?}");
}
