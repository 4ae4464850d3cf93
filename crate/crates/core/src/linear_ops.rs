//! Linearised operators around the uniaxial equilibrium `Q_0 = S_2 (nn - I/3)`.

use nalgebra::{Matrix3 as NMatrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::closure::apply_mq;
use crate::equilibrium::PhaseConstants;
use crate::error::{Error, Result};
use crate::quadrature::{moments_of, BinghamMoments, SphereQuadrature};
use crate::tensor::{Mat3, QTensor, Tensor4Sym, Vec3};

/// Equilibrium data around a director `n`.
#[derive(Debug, Clone)]
pub struct DirectorContext {
    pub n: Vec3,
    pub constants: PhaseConstants,
    /// Quadrature moments of the equilibrium density `exp(eta (nn - I/3) : mm)`.
    pub moments: BinghamMoments,
}

impl DirectorContext {
    pub fn new(n: Vec3, constants: PhaseConstants, quad: &SphereQuadrature) -> Result<Self> {
        let norm = n.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Parameter("director must be a nonzero vector".into()));
        }
        let n = n / norm;
        let b0 = QTensor::uniaxial(constants.eta, &n);
        let moments = moments_of(&b0, quad)?;
        Ok(DirectorContext {
            n,
            constants,
            moments,
        })
    }

    pub fn q0(&self) -> QTensor {
        QTensor::uniaxial(self.constants.s2, &self.n)
    }

    pub fn nn(&self) -> Mat3 {
        self.n * self.n.transpose()
    }

    /// Fourth moment at equilibrium from the closed form in `S_2`, `S_4`.
    pub fn m4_closed_form(&self) -> Tensor4Sym {
        m4_closed_form(&self.n, self.constants.s2, self.constants.s4)
    }
}

/// `S4 nnnn + (S2 - S4)/7 (sym nn delta) + (S4/35 - 2 S2/21 + 1/15)(sym delta delta)`.
pub fn m4_closed_form(n: &Vec3, s2: f64, s4: f64) -> Tensor4Sym {
    let c2 = (s2 - s4) / 7.0;
    let c0 = s4 / 35.0 - 2.0 * s2 / 21.0 + 1.0 / 15.0;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    Tensor4Sym::from_fn(|i, j, k, l| {
        s4 * n[i] * n[j] * n[k] * n[l]
            + c2 * (n[i] * n[j] * d(k, l)
                + n[k] * n[l] * d(i, j)
                + n[i] * n[k] * d(j, l)
                + n[j] * n[l] * d(i, k)
                + n[i] * n[l] * d(j, k)
                + n[j] * n[k] * d(i, l))
            + c0 * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k))
    })
}

/// The three tensor structures shared by `Q_n`, its inverse and `H_n`:
/// `(nn - I/3)(nn:Q)`, `nn.Q + Q.nn - 2/3 I (nn:Q)` and `Q`.
fn structures(n: &Vec3, q: &QTensor) -> (Mat3, Mat3, Mat3) {
    let nn = n * n.transpose();
    let qm = q.to_matrix();
    let qnn = qm.component_mul(&nn).sum();
    let id = Mat3::identity();
    (
        (nn - id / 3.0) * qnn,
        nn * qm + qm * nn - id * (2.0 / 3.0 * qnn),
        qm,
    )
}

pub fn apply_qn(ctx: &DirectorContext, q: &QTensor) -> QTensor {
    let [x1, x2, x3] = ctx.constants.xi;
    let (a, b, c) = structures(&ctx.n, q);
    QTensor::from_matrix(&(a * x1 + b * x2 + c * x3))
}

pub fn apply_qn_inverse(ctx: &DirectorContext, q: &QTensor) -> QTensor {
    let [p1, p2, p3] = ctx.constants.psi;
    let (a, b, c) = structures(&ctx.n, q);
    QTensor::from_matrix(&(a * p1 + b * p2 + c * p3))
}

pub fn apply_hn(ctx: &DirectorContext, q: &QTensor) -> QTensor {
    let [p1, p2, _] = ctx.constants.psi;
    let (a, b, c) = structures(&ctx.n, q);
    QTensor::from_matrix(&(a * p1 + (b - c) * p2))
}

/// `P_in(Q) = nn.Q + Q.nn - 2 (Q:nn) nn`.
pub fn project_in(n: &Vec3, q: &QTensor) -> QTensor {
    let nn = n * n.transpose();
    let qm = q.to_matrix();
    let qnn = qm.component_mul(&nn).sum();
    QTensor::from_matrix(&(nn * qm + qm * nn - nn * (2.0 * qnn)))
}

pub fn project_out(n: &Vec3, q: &QTensor) -> QTensor {
    *q - project_in(n, q)
}

/// Symmetric part of `M_Q(A)` for lab-frame moments.
pub fn apply_j(moments: &BinghamMoments, a: &Mat3) -> QTensor {
    QTensor::from_matrix(&apply_mq(moments, a))
}

/// `U(B) = M6 : B - (Q : B) M4`.
pub fn apply_u(moments: &BinghamMoments, b: &QTensor) -> Tensor4Sym {
    let qb = moments.q.dot(b);
    moments
        .m6
        .contract2(&b.to_matrix())
        .add(&moments.m4.scale(-qb))
}

/// Orthonormal completion `(e1, e2)` of a unit vector `n`.
pub fn orthonormal_complement(n: &Vec3) -> (Vec3, Vec3) {
    let trial = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (trial - n * n.dot(&trial)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Orthonormal basis of the in-space `{n m + m n : m . n = 0}`.
pub fn in_space_basis(n: &Vec3) -> [QTensor; 2] {
    let (e1, e2) = orthonormal_complement(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        QTensor::from_matrix(&((n * e1.transpose() + e1 * n.transpose()) * s)),
        QTensor::from_matrix(&((n * e2.transpose() + e2 * n.transpose()) * s)),
    ]
}

/// Orthonormal basis of the out-space: the scaled uniaxial direction and the
/// two traceless tensors living in the plane orthogonal to `n`.
pub fn out_space_basis(n: &Vec3) -> [QTensor; 3] {
    let (e1, e2) = orthonormal_complement(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        QTensor::uniaxial(1.5f64.sqrt(), n),
        QTensor::from_matrix(&((e1 * e1.transpose() - e2 * e2.transpose()) * s)),
        QTensor::from_matrix(&((e1 * e2.transpose() + e2 * e1.transpose()) * s)),
    ]
}

/// Minimum of `<H_n(Q), Q> / |Q|^2` over the out-space.
pub fn coercivity_constant(ctx: &DirectorContext) -> f64 {
    let basis = out_space_basis(&ctx.n);
    let m = NMatrix3::from_fn(|a, b| apply_hn(ctx, &basis[a]).dot(&basis[b]));
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// `beta1 - beta3/2` from the xi coefficients.
    pub beta1_minus_half_beta3: f64,
    /// The same quantity from the closed form in the `A_k`.
    pub closed_form: f64,
    /// Set when `beta1 = 2 beta3` to rounding, where the two cases of the
    /// coercivity argument meet.
    pub equality: bool,
}

pub fn beta_coefficients(c: &PhaseConstants) -> BetaReport {
    let [x1, x2, x3] = c.xi;
    let al = c.alpha;
    let beta1 = x1 - al * (2.0 / 3.0 * (x1 + 2.0 * x2).powi(2) - 2.0 * x2 * x2 + 2.0 * x1 * x3);
    let beta2 = 2.0 * x2 - al * (2.0 * x2 * x2 + 4.0 * x2 * x3);
    let beta3 = x3 - al * x3 * x3;
    let [a0, a2, a4, _] = c.a;
    let closed = 9.0 * (a0 * a4 - a2 * a2) * (3.0 * a2 * a2 + 2.0 * a0 * a2 - 5.0 * a0 * a4)
        / (8.0 * a0.powi(3) * (a2 - a4));
    BetaReport {
        beta1,
        beta2,
        beta3,
        beta1_minus_half_beta3: beta1 - beta3 / 2.0,
        closed_form: closed,
        equality: (beta1 - 2.0 * beta3).abs() <= 1e-12 * beta1.abs().max(beta3.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projections_of_simple_tensors() {
        let n = Vec3::new(0.3, -0.4, 0.5).normalize();
        let [a, b] = in_space_basis(&n);
        assert!((project_in(&n, &a) - a).norm() < 1e-15);
        assert!(project_out(&n, &b).norm() < 1e-15);
        let u = QTensor::uniaxial(1.0, &n);
        assert!(project_in(&n, &u).norm() < 1e-15);
    }

    #[test]
    fn bases_are_orthonormal_and_complementary() {
        let n = Vec3::new(-0.2, 0.9, 0.1).normalize();
        let all: Vec<QTensor> = in_space_basis(&n)
            .into_iter()
            .chain(out_space_basis(&n))
            .collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((a.dot(b) - e).abs() < 1e-14);
            }
        }
    }
}
