//! Inversion of the Bingham moment map, the closure operator `M_Q`, the
//! Jacobian of the moment map and the eigenvalue-spread bound.

use std::collections::HashMap;

use nalgebra::{Matrix5, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{moments_of, BinghamMoments, SphereQuadrature, EXPONENT_BUDGET};
use crate::tensor::{contract42, q_basis, symmetric_eigen, Mat3, QTensor};

pub const DEFAULT_TOL: f64 = 1e-11;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Initial guess scale: `B0 = ALPHA_REF * Q`.
pub const ALPHA_REF: f64 = 5.0;

const U1: [f64; 3] = [
    std::f64::consts::FRAC_1_SQRT_2,
    -std::f64::consts::FRAC_1_SQRT_2,
    0.0,
];
const INV_SQRT6: f64 = 0.408_248_290_463_863;
const U2: [f64; 3] = [INV_SQRT6, INV_SQRT6, -2.0 * INV_SQRT6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureOptions {
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        ClosureOptions {
            delta: 0.05,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl ClosureOptions {
    pub fn with_delta(delta: f64) -> Self {
        ClosureOptions {
            delta,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0 / 3.0) {
            return Err(Error::Parameter(format!(
                "closure margin delta must lie in (0, 1/3), got {}",
                self.delta
            )));
        }
        if !(self.tol >= 1e-13) {
            return Err(Error::Parameter(format!(
                "closure tolerance must be >= 1e-13, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureSolveReport {
    pub b: QTensor,
    pub residual: f64,
    pub iterations: usize,
    pub used_damping: bool,
}

/// Moments of a Bingham density with diagonal `B = diag(b)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DiagMoments {
    pub log_z: f64,
    /// `<m_i^2>`
    pub m2: [f64; 3],
    /// `<m_i^2 m_j^2>`
    pub m4: [[f64; 3]; 3],
}

pub(crate) fn diag_moments(quad: &SphereQuadrature, b: [f64; 3]) -> DiagMoments {
    let bmax = b[0].max(b[1]).max(b[2]);
    let mut z = 0.0;
    let mut m2 = [0.0; 3];
    let (mut s00, mut s11, mut s22, mut s01, mut s02, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (s, w) in quad.octant_sq.iter().zip(quad.octant_w.iter()) {
        let e = w * (b[0] * s[0] + b[1] * s[1] + b[2] * s[2] - bmax).exp();
        z += e;
        let (e0, e1, e2) = (e * s[0], e * s[1], e * s[2]);
        m2[0] += e0;
        m2[1] += e1;
        m2[2] += e2;
        s00 += e0 * s[0];
        s11 += e1 * s[1];
        s22 += e2 * s[2];
        s01 += e0 * s[1];
        s02 += e0 * s[2];
        s12 += e1 * s[2];
    }
    let inv = 1.0 / z;
    let m4 = [
        [s00 * inv, s01 * inv, s02 * inv],
        [s01 * inv, s11 * inv, s12 * inv],
        [s02 * inv, s12 * inv, s22 * inv],
    ];
    DiagMoments {
        log_z: z.ln() + bmax,
        m2: m2.map(|x| x * inv),
        m4,
    }
}

/// Closure data at one point, stored in the common eigenframe of `Q` and
/// `B_Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosurePoint {
    /// Columns are the eigenvectors of `Q` (ascending eigenvalues).
    pub frame: Mat3,
    pub q: [f64; 3],
    pub b: [f64; 3],
    pub log_z: f64,
    pub m2: [f64; 3],
    pub m4: [[f64; 3]; 3],
    pub residual: f64,
    pub iterations: usize,
    pub used_damping: bool,
}

impl ClosurePoint {
    pub fn b_matrix(&self) -> Mat3 {
        let r = &self.frame;
        r * Mat3::from_diagonal(&self.b.into()) * r.transpose()
    }

    pub fn b_tensor(&self) -> QTensor {
        QTensor::from_matrix(&self.b_matrix())
    }

    pub fn q_tensor(&self) -> QTensor {
        let r = &self.frame;
        QTensor::from_matrix(&(r * Mat3::from_diagonal(&self.q.into()) * r.transpose()))
    }

    pub fn b_spread(&self) -> f64 {
        self.b[2] - self.b[0]
    }

    pub fn report(&self) -> ClosureSolveReport {
        ClosureSolveReport {
            b: self.b_tensor(),
            residual: self.residual,
            iterations: self.iterations,
            used_damping: self.used_damping,
        }
    }

    /// `A' : M4'` for a matrix already expressed in the eigenframe.
    #[inline]
    fn contract_frame(&self, ap: &Mat3) -> Mat3 {
        let m = &self.m4;
        let mut out = Mat3::zeros();
        for i in 0..3 {
            out[(i, i)] = m[i][0] * ap[(0, 0)] + m[i][1] * ap[(1, 1)] + m[i][2] * ap[(2, 2)];
            for j in 0..3 {
                if i != j {
                    out[(i, j)] = m[i][j] * (ap[(i, j)] + ap[(j, i)]);
                }
            }
        }
        out
    }

    /// `M_Q(A) = A/3 + Q.A - A : M4`.
    pub fn apply_mq(&self, a: &Mat3) -> Mat3 {
        let r = &self.frame;
        let ap = r.transpose() * a * r;
        let c = self.contract_frame(&ap);
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out[(i, j)] = ap[(i, j)] / 3.0 + self.q[i] * ap[(i, j)] - c[(i, j)];
            }
        }
        r * out * r.transpose()
    }

    /// Symmetric part of `M_Q(A)`, which is always traceless.
    pub fn apply_j(&self, a: &Mat3) -> QTensor {
        QTensor::from_matrix(&self.apply_mq(a))
    }

    /// `(A : M4)_ij`.
    pub fn contract_m4(&self, a: &Mat3) -> Mat3 {
        let r = &self.frame;
        let ap = r.transpose() * a * r;
        r * self.contract_frame(&ap) * r.transpose()
    }

    /// `A : M4 : A`.
    pub fn m4_quad_form(&self, a: &Mat3) -> f64 {
        let r = &self.frame;
        let ap = r.transpose() * a * r;
        ap.component_mul(&self.contract_frame(&ap)).sum()
    }

    /// `Q : B_Q`.
    pub fn q_dot_b(&self) -> f64 {
        self.q.iter().zip(self.b.iter()).map(|(q, b)| q * b).sum()
    }

    /// Bulk free-energy density `-ln Z + Q:B - alpha |Q|^2 / 2`.
    pub fn bulk_density(&self, alpha: f64) -> f64 {
        let q2: f64 = self.q.iter().map(|x| x * x).sum();
        -self.log_z + self.q_dot_b() - 0.5 * alpha * q2
    }
}

fn b_from_y(y: [f64; 2]) -> [f64; 3] {
    [
        y[0] * U1[0] + y[1] * U2[0],
        y[0] * U1[1] + y[1] * U2[1],
        y[0] * U1[2] + y[1] * U2[2],
    ]
}

fn y_from_b(b: [f64; 3]) -> [f64; 2] {
    [
        b[0] * U1[0] + b[1] * U1[1] + b[2] * U1[2],
        b[0] * U2[0] + b[1] * U2[1] + b[2] * U2[2],
    ]
}

fn spread(b: &[f64; 3]) -> f64 {
    b[0].max(b[1]).max(b[2]) - b[0].min(b[1]).min(b[2])
}

/// Solve the eigenvalue problem for `B` given the (ascending) eigenvalues of
/// `Q`, by damped Newton on the concave dual objective `y.q - omega(y)`.
pub(crate) fn solve_diag(
    q: [f64; 3],
    opts: &ClosureOptions,
    quad: &SphereQuadrature,
    warm: Option<[f64; 3]>,
) -> Result<(DiagMoments, [f64; 3], f64, usize, bool)> {
    let qt = [
        q[0] * U1[0] + q[1] * U1[1] + q[2] * U1[2],
        q[0] * U2[0] + q[1] * U2[1] + q[2] * U2[2],
    ];
    let mut b0 = warm.unwrap_or(q.map(|x| ALPHA_REF * x));
    let s = spread(&b0);
    if s > 0.9 * EXPONENT_BUDGET {
        b0 = b0.map(|x| x * 0.9 * EXPONENT_BUDGET / s);
    }
    let mut y = y_from_b(b0);
    let mut dm = diag_moments(quad, b_from_y(y));
    let mut phi = y[0] * qt[0] + y[1] * qt[1] - dm.log_z;
    let mut used_damping = false;
    let mut last_res = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let r = [
            q[0] - (dm.m2[0] - 1.0 / 3.0),
            q[1] - (dm.m2[1] - 1.0 / 3.0),
            q[2] - (dm.m2[2] - 1.0 / 3.0),
        ];
        let res = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        last_res = res;
        if res <= opts.tol {
            return Ok((dm, b_from_y(y), res, it, used_damping));
        }
        if it == opts.max_iter {
            break;
        }
        let g = [
            r[0] * U1[0] + r[1] * U1[1] + r[2] * U1[2],
            r[0] * U2[0] + r[1] * U2[1] + r[2] * U2[2],
        ];
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = dm.m4[i][j] - dm.m2[i] * dm.m2[j];
            }
        }
        let mut h = [[0.0; 2]; 2];
        for (a, ua) in [U1, U2].iter().enumerate() {
            for (bb, ub) in [U1, U2].iter().enumerate() {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += ua[i] * c[i][j] * ub[j];
                    }
                }
                h[a][bb] = s;
            }
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = if det > 0.0 && det.is_finite() {
            [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ]
        } else {
            g
        };
        let slope = g[0] * step[0] + g[1] * step[1];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let yn = [y[0] + t * step[0], y[1] + t * step[1]];
            let bn = b_from_y(yn);
            if spread(&bn) <= EXPONENT_BUDGET {
                let dn = diag_moments(quad, bn);
                let phin = yn[0] * qt[0] + yn[1] * qt[1] - dn.log_z;
                let slack = 1e-14 * (1.0 + phi.abs());
                if phin.is_finite() && phin >= phi + 1e-4 * t * slope - slack {
                    y = yn;
                    dm = dn;
                    phi = phin;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
            used_damping = true;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "Bingham map Newton iteration",
        iterations: opts.max_iter,
        residual: last_res,
    })
}

/// Solve for `B_Q` and keep the eigenframe closure data.
pub fn solve_point(
    q: &QTensor,
    opts: &ClosureOptions,
    quad: &SphereQuadrature,
    warm: Option<[f64; 3]>,
) -> Result<ClosurePoint> {
    opts.validate()?;
    if !q.is_finite() {
        return Err(Error::NonFinite("Q"));
    }
    let (vals, frame) = symmetric_eigen(&q.to_matrix());
    check_physical(vals, opts.delta)?;
    let (dm, b, residual, iterations, used_damping) = solve_diag(vals, opts, quad, warm)?;
    Ok(ClosurePoint {
        frame,
        q: vals,
        b,
        log_z: dm.log_z,
        m2: dm.m2,
        m4: dm.m4,
        residual,
        iterations,
        used_damping,
    })
}

pub(crate) fn check_physical(vals: [f64; 3], delta: f64) -> Result<()> {
    if vals[0] < -1.0 / 3.0 + delta || vals[2] > 2.0 / 3.0 - delta {
        return Err(Error::NonPhysical {
            eigenvalues: vals,
            delta,
        });
    }
    Ok(())
}

/// The Bingham map `Q -> B_Q`.
pub fn bingham_map(
    q: &QTensor,
    delta: f64,
    tol: f64,
    quad: &SphereQuadrature,
) -> Result<ClosureSolveReport> {
    let opts = ClosureOptions {
        delta,
        tol,
        max_iter: DEFAULT_MAX_ITER,
    };
    Ok(solve_point(q, &opts, quad, None)?.report())
}

/// Bingham map starting from an arbitrary initial `B` (used to probe
/// uniqueness).
pub fn bingham_map_from(
    q: &QTensor,
    b_init: &QTensor,
    opts: &ClosureOptions,
    quad: &SphereQuadrature,
) -> Result<ClosureSolveReport> {
    opts.validate()?;
    let (vals, frame) = symmetric_eigen(&q.to_matrix());
    check_physical(vals, opts.delta)?;
    let bi = frame.transpose() * b_init.to_matrix() * frame;
    let warm = [bi[(0, 0)], bi[(1, 1)], bi[(2, 2)]];
    let (dm, b, residual, iterations, used_damping) = solve_diag(vals, opts, quad, Some(warm))?;
    Ok(ClosurePoint {
        frame,
        q: vals,
        b,
        log_z: dm.log_z,
        m2: dm.m2,
        m4: dm.m4,
        residual,
        iterations,
        used_damping,
    }
    .report())
}

/// Memo of previous solutions keyed by quantized eigenvalues of `Q`; only
/// ever used as a Newton warm start, so results stay within tolerance of an
/// uncached solve.
#[derive(Debug, Default, Clone)]
pub struct ClosureMemo {
    map: HashMap<[i64; 3], [f64; 3]>,
    pub hits: usize,
    pub misses: usize,
}

impl ClosureMemo {
    pub const GRID: f64 = 1e-6;

    pub fn new() -> Self {
        Self::default()
    }

    fn key(q: &[f64; 3]) -> [i64; 3] {
        q.map(|x| (x / Self::GRID).round() as i64)
    }

    pub fn solve(
        &mut self,
        q: &QTensor,
        opts: &ClosureOptions,
        quad: &SphereQuadrature,
    ) -> Result<ClosurePoint> {
        let vals = symmetric_eigen(&q.to_matrix()).0;
        let key = Self::key(&vals);
        let warm = self.map.get(&key).copied();
        if warm.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        let p = solve_point(q, opts, quad, warm)?;
        self.map.insert(key, p.b);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// `M_Q(A) = A/3 + Q.A - A : M4` from lab-frame moments.
pub fn apply_mq(moments: &BinghamMoments, a: &Mat3) -> Mat3 {
    a / 3.0 + moments.q.to_matrix() * a - contract42(&moments.m4, a)
}

/// Gradient of the moment map `B -> Q(B)` in the orthonormal basis of
/// symmetric traceless matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureJacobian {
    pub matrix: Matrix5<f64>,
}

impl ClosureJacobian {
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix).eigenvalues.min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.matrix - self.matrix.transpose()).abs().max()
    }

    pub fn apply(&self, e: &QTensor) -> QTensor {
        let y = nalgebra::Vector5::from(e.to_basis());
        let out = self.matrix * y;
        QTensor::from_basis([out[0], out[1], out[2], out[3], out[4]])
    }
}

/// `<(mm:E_a)(mm:E_b)> - (Q:E_a)(Q:E_b)`.
pub fn closure_jacobian(b: &QTensor, quad: &SphereQuadrature) -> Result<ClosureJacobian> {
    let mo = moments_of(b, quad)?;
    Ok(jacobian_from_moments(&mo))
}

pub fn jacobian_from_moments(mo: &BinghamMoments) -> ClosureJacobian {
    let basis = q_basis();
    let q = mo.q.to_matrix();
    let mut m = Matrix5::zeros();
    for a in 0..5 {
        let ma = contract42(&mo.m4, &basis[a]);
        let qa = q.component_mul(&basis[a]).sum();
        for bb in 0..5 {
            let qb = q.component_mul(&basis[bb]).sum();
            m[(a, bb)] = ma.component_mul(&basis[bb]).sum() - qa * qb;
        }
    }
    ClosureJacobian { matrix: m }
}

/// Which eigenvalue ordering produced the reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpreadCase {
    /// Both orderings give sets of equal measure (exchange symmetry of the
    /// two minor axes), so the bound is the same.
    OrderingsCoincide,
    MiddleNearLargest,
    MiddleNearSmallest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadBound {
    pub lambda: f64,
    pub meas_u: f64,
    pub meas_v: f64,
    pub case: SpreadCase,
}

/// Area of `{m : m_a^2 < ca, m_b^2 < cb}` for distinct axes.
fn band_intersection_area(ca: f64, cb: f64) -> f64 {
    let a = ca.sqrt();
    let bnd = cb.sqrt();
    let (x, w) = crate::quadrature::gauss_legendre(64);
    4.0 * x
        .iter()
        .zip(w.iter())
        .map(|(xi, wi)| {
            let m3 = a * xi;
            let rho = (1.0 - m3 * m3).sqrt();
            wi * a * (bnd / rho).min(1.0).asin()
        })
        .sum::<f64>()
}

/// Upper bound on the eigenvalue spread of `B_Q` for `Q` with margin `delta`.
pub fn spread_bound(delta: f64) -> Result<SpreadBound> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(Error::Parameter(format!(
            "spread bound needs delta in (0, 1/3), got {delta}"
        )));
    }
    let meas_v = 4.0 * std::f64::consts::PI * (1.0 - (delta / 2.0).sqrt());
    let u_a = band_intersection_area(delta / 8.0, delta / 4.0);
    let u_b = band_intersection_area(delta / 4.0, delta / 8.0);
    let lam = |mu: f64| (4.0 / delta) * (2.0 * meas_v / (delta * mu)).ln();
    let (la, lb) = (lam(u_a), lam(u_b));
    let case = if (la - lb).abs() <= 1e-9 * la.abs() {
        SpreadCase::OrderingsCoincide
    } else if la >= lb {
        SpreadCase::MiddleNearSmallest
    } else {
        SpreadCase::MiddleNearLargest
    };
    let (lambda, meas_u) = if la >= lb { (la, u_a) } else { (lb, u_b) };
    Ok(SpreadBound {
        lambda,
        meas_u,
        meas_v,
        case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vec3;

    #[test]
    fn zero_q_gives_zero_b() {
        let quad = SphereQuadrature::new(16, 32).unwrap();
        let r = bingham_map(&QTensor::ZERO, 0.1, 1e-12, &quad).unwrap();
        assert!(r.b.norm() < 1e-14);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn non_physical_rejected() {
        let quad = SphereQuadrature::new(16, 32).unwrap();
        let q = QTensor::uniaxial(0.99, &Vec3::z());
        assert!(matches!(
            bingham_map(&q, 0.05, 1e-11, &quad),
            Err(Error::NonPhysical { .. })
        ));
        assert!(bingham_map(&QTensor::ZERO, 0.05, 1e-15, &quad).is_err());
    }

    #[test]
    fn spread_bound_diverges_as_delta_shrinks() {
        let mut last = 0.0;
        for d in [0.3, 0.2, 0.1, 0.05, 0.01, 0.001] {
            let s = spread_bound(d).unwrap();
            assert!(s.lambda > last);
            assert_eq!(s.case, SpreadCase::OrderingsCoincide);
            last = s.lambda;
        }
        assert!(spread_bound(0.0).is_err());
        assert!(spread_bound(0.4).is_err());
    }

    #[test]
    fn mq_of_identity_vanishes() {
        let quad = SphereQuadrature::new(32, 64).unwrap();
        let q = QTensor::from_components([0.2, -0.1, 0.05, 0.02, -0.03]).unwrap();
        let p = solve_point(&q, &ClosureOptions::default(), &quad, None).unwrap();
        assert!(p.apply_mq(&Mat3::identity()).norm() < 1e-13);
    }

    #[test]
    fn memo_is_transparent() {
        let quad = SphereQuadrature::new(32, 64).unwrap();
        let q = QTensor::from_components([0.2, -0.1, 0.05, 0.02, -0.03]).unwrap();
        let opts = ClosureOptions::default();
        let mut memo = ClosureMemo::new();
        let a = memo.solve(&q, &opts, &quad).unwrap();
        let b = memo.solve(&q, &opts, &quad).unwrap();
        let c = solve_point(&q, &opts, &quad, None).unwrap();
        assert_eq!(memo.hits, 1);
        assert!((a.b_tensor() - b.b_tensor()).norm() < 1e-9);
        assert!((a.b_tensor() - c.b_tensor()).norm() < 1e-9);
    }
}
