//! Manufactured solutions for the field solver.

use std::sync::Mutex;

use qtensor_core::dynamics::{FieldSolver, FieldState, Forcing, ModelParams, SolverOptions};
use qtensor_core::spectral::Grid2d;
use qtensor_core::tensor::{Mat3, QTensor, Vec3};
use qtensor_core::Result;

fn sym(a: [[f64; 3]; 3]) -> Mat3 {
    let m = Mat3::from_fn(|i, j| a[i][j]);
    let s = (m + m.transpose()) * 0.5;
    s - Mat3::identity() * (s.trace() / 3.0)
}

fn base_q() -> QTensor {
    QTensor::uniaxial(0.6, &Vec3::new(1.0, 0.2, 0.1).normalize())
}

/// Band-limited travelling-wave solution, |k| <= 2 in each direction.
pub struct Unsteady;

impl Unsteady {
    fn parts(x: f64, y: f64, t: f64) -> (Mat3, Mat3, [f64; 3], [f64; 3]) {
        let a1 = sym([[0.3, 0.5, -0.2], [0.0, -0.4, 0.6], [0.0, 0.0, 0.1]]);
        let a2 = sym([[-0.2, 0.1, 0.4], [0.0, 0.5, -0.3], [0.0, 0.0, -0.3]]);
        let s1 = (x + y).sin();
        let c2 = (2.0 * x - y).cos();
        let g1 = 0.08 * t.cos();
        let g1d = -0.08 * t.sin();
        let g2 = 0.06 * (2.0 * t).sin();
        let g2d = 0.12 * (2.0 * t).cos();
        let q = base_q().to_matrix() + a1 * (g1 * s1) + a2 * (g2 * c2);
        let qd = a1 * (g1d * s1) + a2 * (g2d * c2);
        // psi = h(t) sin(x) cos(2y); v = (psi_y, -psi_x, w)
        let h = 0.1 * (1.0 + 0.5 * t.sin());
        let hd = 0.05 * t.cos();
        let (sx, cx) = x.sin_cos();
        let (s2y, c2y) = (2.0 * y).sin_cos();
        let w = 0.05 * (t + 1.0).sin() * (x + 2.0 * y).cos();
        let wd = 0.05 * (t + 1.0).cos() * (x + 2.0 * y).cos();
        let v = [-2.0 * h * sx * s2y, -h * cx * c2y, w];
        let vd = [-2.0 * hd * sx * s2y, -hd * cx * c2y, wd];
        (q, qd, v, vd)
    }

    pub fn state(n: usize, t: f64) -> FieldState {
        Self::sample(n, t, false)
    }

    pub fn rate(n: usize, t: f64) -> FieldState {
        Self::sample(n, t, true)
    }

    fn sample(n: usize, t: f64, derivative: bool) -> FieldState {
        let grid = Grid2d::new(n).unwrap();
        let mut q = Vec::with_capacity(grid.len());
        let mut v: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        for i in 0..grid.len() {
            let (x, y) = grid.coords(i);
            let (qm, qd, vv, vd) = Self::parts(x, y, t);
            q.push(QTensor::from_matrix(if derivative { &qd } else { &qm }));
            for c in 0..3 {
                v[c].push(if derivative { vd[c] } else { vv[c] });
            }
        }
        FieldState::new(n, t, q, v).unwrap()
    }
}

/// `f(t) = dU*/dt - R(U*(t))` with `R` the semi-discrete right-hand side on
/// the same grid, so `U*` solves the forced semi-discrete system exactly.
pub struct SameGridForcing {
    solver: Mutex<FieldSolver>,
}

impl SameGridForcing {
    pub fn new(n: usize, params: ModelParams, options: SolverOptions) -> Self {
        SameGridForcing {
            solver: Mutex::new(FieldSolver::new(n, params, options).unwrap()),
        }
    }
}

impl Forcing for SameGridForcing {
    fn eval(&self, t: f64, grid: &Grid2d) -> Result<(Vec<QTensor>, [Vec<f64>; 3])> {
        let exact = Unsteady::state(grid.n, t);
        let rate = Unsteady::rate(grid.n, t);
        let (rq, rv) = self.solver.lock().unwrap().tendency(&exact)?;
        let fq = rate.q.iter().zip(&rq).map(|(a, b)| *a - *b).collect();
        let fv = std::array::from_fn(|c| {
            rate.v[c].iter().zip(&rv[c]).map(|(a, b)| a - b).collect()
        });
        Ok((fq, fv))
    }
}

pub fn max_error(a: &FieldState, b: &FieldState) -> f64 {
    let mut e: f64 = 0.0;
    for (x, y) in a.q.iter().zip(&b.q) {
        e = e.max((*x - *y).norm());
    }
    for c in 0..3 {
        for (x, y) in a.v[c].iter().zip(&b.v[c]) {
            e = e.max((x - y).abs());
        }
    }
    e
}

pub fn mms_params() -> ModelParams {
    ModelParams {
        epsilon: 0.05,
        ..ModelParams::default()
    }
}

/// Final-time errors of forced runs over `[0, t_end]` for each step count.
pub fn temporal_errors(n: usize, t_end: f64, step_counts: &[usize]) -> Vec<f64> {
    let params = mms_params();
    let options = SolverOptions::default();
    step_counts
        .iter()
        .map(|&steps| {
            let mut solver = FieldSolver::new(n, params, options).unwrap();
            solver.set_forcing(Some(Box::new(SameGridForcing::new(n, params, options))));
            let dt = t_end / steps as f64;
            let mut state = Unsteady::state(n, 0.0);
            for _ in 0..steps {
                let (next, info) = solver.step(&state, dt).unwrap();
                assert_eq!(info.halvings, 0);
                state = next;
            }
            max_error(&state, &Unsteady::state(n, t_end))
        })
        .collect()
}

/// Smooth stationary state whose spectrum is not band-limited.
pub fn analytic_state(n: usize) -> FieldState {
    let grid = Grid2d::new(n).unwrap();
    let mut q = Vec::with_capacity(grid.len());
    let mut v: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
    for i in 0..grid.len() {
        let (x, y) = grid.coords(i);
        let theta = 0.3 * (0.4 * x.sin()).exp() - 0.2 * (0.3 * (x - y).cos()).exp();
        let phi = 0.3 / (2.0 + 0.5 * (x + 2.0 * y).cos());
        let nvec = Vec3::new(theta.cos() * phi.cos(), theta.sin() * phi.cos(), phi.sin());
        q.push(QTensor::uniaxial(0.55, &nvec));
        // psi = 0.2 exp(0.5 sin x) cos y
        let e = (0.5 * x.sin()).exp();
        v[0].push(-0.2 * e * y.sin());
        v[1].push(-0.2 * e * 0.5 * x.cos() * y.cos());
        v[2].push(0.1 * (x.cos() + y.sin()).sin());
    }
    FieldState::new(n, 0.0, q, v).unwrap()
}

/// Sup-norm residual `|R_n(U*) + f|` on coarse grids relative to `|f|`,
/// with the stationary forcing `f = -R_fine(U*)` sampled from the fine grid.
pub fn spatial_residuals(fine: usize, coarse: &[usize]) -> Vec<f64> {
    let params = mms_params();
    let options = SolverOptions::default();
    let mut fine_solver = FieldSolver::new(fine, params, options).unwrap();
    let (fq, fv) = fine_solver.tendency(&analytic_state(fine)).unwrap();
    let scale = fq
        .iter()
        .map(|q| q.norm())
        .chain(fv.iter().flatten().map(|x| x.abs()))
        .fold(0.0, f64::max);
    coarse
        .iter()
        .map(|&n| {
            let r = fine / n;
            let mut solver = FieldSolver::new(n, params, options).unwrap();
            let state = analytic_state(n);
            let (rq, rv) = solver.tendency(&state).unwrap();
            let mut e: f64 = 0.0;
            for iy in 0..n {
                for ix in 0..n {
                    let c = iy * n + ix;
                    let f = iy * r * fine + ix * r;
                    e = e.max((rq[c] - fq[f]).norm());
                    for k in 0..3 {
                        e = e.max((rv[k][c] - fv[k][f]).abs());
                    }
                }
            }
            e / scale
        })
        .collect()
}
