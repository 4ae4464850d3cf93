//! Symmetric traceless 3x3 tensors, eigen-decomposition and fully symmetric
//! fourth/sixth order tensors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Orthonormal basis of the space of symmetric traceless matrices
/// (Frobenius inner product).
pub fn q_basis() -> [Mat3; 5] {
    let s2 = 1.0 / SQRT2;
    let s6 = 1.0 / 6f64.sqrt();
    [
        Mat3::new(s2, 0.0, 0.0, 0.0, -s2, 0.0, 0.0, 0.0, 0.0),
        Mat3::new(s6, 0.0, 0.0, 0.0, s6, 0.0, 0.0, 0.0, -2.0 * s6),
        Mat3::new(0.0, s2, 0.0, s2, 0.0, 0.0, 0.0, 0.0, 0.0),
        Mat3::new(0.0, 0.0, s2, 0.0, 0.0, 0.0, s2, 0.0, 0.0),
        Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, s2, 0.0, s2, 0.0),
    ]
}

/// Element of the five-dimensional space of symmetric traceless 3x3 matrices,
/// stored as `(q11, q22, q12, q13, q23)` with `q33 = -q11 - q22`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QTensor {
    c: [f64; 5],
}

impl QTensor {
    pub const ZERO: QTensor = QTensor { c: [0.0; 5] };

    pub fn from_components(c: [f64; 5]) -> Result<Self> {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("QTensor components"));
        }
        Ok(QTensor { c })
    }

    pub fn zero() -> Self {
        Self::ZERO
    }

    /// `s (n n - I/3)` for a (not necessarily normalized) direction `n`.
    pub fn uniaxial(s: f64, n: &Vec3) -> Self {
        let n = n.normalize();
        Self::from_matrix(&(s * (n * n.transpose())))
    }

    /// Symmetric traceless part of an arbitrary 3x3 matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        let tr3 = (m[(0, 0)] + m[(1, 1)] + m[(2, 2)]) / 3.0;
        QTensor {
            c: [
                m[(0, 0)] - tr3,
                m[(1, 1)] - tr3,
                0.5 * (m[(0, 1)] + m[(1, 0)]),
                0.5 * (m[(0, 2)] + m[(2, 0)]),
                0.5 * (m[(1, 2)] + m[(2, 1)]),
            ],
        }
    }

    pub fn components(&self) -> [f64; 5] {
        self.c
    }

    #[inline]
    pub fn q33(&self) -> f64 {
        -self.c[0] - self.c[1]
    }

    #[inline]
    pub fn to_matrix(&self) -> Mat3 {
        let [a, b, x, y, z] = self.c;
        Mat3::new(a, x, y, x, b, z, y, z, -a - b)
    }

    /// Coordinates in the orthonormal basis returned by [`q_basis`].
    #[inline]
    pub fn to_basis(&self) -> [f64; 5] {
        let [a, b, x, y, z] = self.c;
        [
            (a - b) / SQRT2,
            (a + b) * 1.5f64.sqrt(),
            SQRT2 * x,
            SQRT2 * y,
            SQRT2 * z,
        ]
    }

    #[inline]
    pub fn from_basis(y: [f64; 5]) -> Self {
        let d = y[0] * SQRT2;
        let s = y[1] * (2.0f64 / 3.0).sqrt();
        QTensor {
            c: [
                0.5 * (s + d),
                0.5 * (s - d),
                y[2] / SQRT2,
                y[3] / SQRT2,
                y[4] / SQRT2,
            ],
        }
    }

    /// Frobenius inner product.
    #[inline]
    pub fn dot(&self, o: &QTensor) -> f64 {
        let [a, b, x, y, z] = self.c;
        let [a2, b2, x2, y2, z2] = o.c;
        a * a2 + b * b2 + (a + b) * (a2 + b2) + 2.0 * (x * x2 + y * y2 + z * z2)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Frobenius product with an arbitrary matrix.
    pub fn dot_matrix(&self, m: &Mat3) -> f64 {
        self.to_matrix().component_mul(m).sum()
    }

    pub fn eigen(&self) -> EigenFrame {
        EigenFrame::of(self)
    }

    pub fn is_physical(&self, delta: f64) -> bool {
        is_physical(self, delta)
    }

    pub fn biaxiality(&self) -> f64 {
        biaxiality(self)
    }

    /// `R Q R^T`.
    pub fn rotate(&self, r: &Mat3) -> QTensor {
        QTensor::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(self, o: QTensor) -> QTensor {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(o.c) {
            *a += b;
        }
        QTensor { c }
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, o: QTensor) {
        *self = *self + o;
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(self, o: QTensor) -> QTensor {
        self + (-o)
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        self * -1.0
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, s: f64) -> QTensor {
        QTensor {
            c: self.c.map(|x| x * s),
        }
    }
}

impl Mul<QTensor> for f64 {
    type Output = QTensor;
    fn mul(self, q: QTensor) -> QTensor {
        q * self
    }
}

/// Eigenvalues in ascending order and the matching orthonormal, right-handed
/// eigenvector frame (columns of `vectors`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrame {
    pub values: [f64; 3],
    pub vectors: Mat3,
}

impl EigenFrame {
    pub fn of(q: &QTensor) -> Self {
        let (values, vectors) = symmetric_eigen(&q.to_matrix());
        EigenFrame { values, vectors }
    }

    pub fn vector(&self, i: usize) -> Vec3 {
        self.vectors.column(i).into_owned()
    }

    /// `R diag(values) R^T`.
    pub fn reconstruct(&self) -> Mat3 {
        let r = &self.vectors;
        r * Mat3::from_diagonal(&Vec3::from(self.values)) * r.transpose()
    }

    /// `R diag(d) R^T` for arbitrary diagonal values in this frame.
    pub fn compose(&self, d: [f64; 3]) -> Mat3 {
        let r = &self.vectors;
        r * Mat3::from_diagonal(&Vec3::from(d)) * r.transpose()
    }
}

/// Eigen-decomposition of a real symmetric 3x3 matrix. Eigenvalues ascend;
/// eigenvector columns form a rotation (determinant +1).
pub fn symmetric_eigen(a: &Mat3) -> ([f64; 3], Mat3) {
    let a = 0.5 * (a + a.transpose());
    let shift = a.trace() / 3.0;
    let b = a - Mat3::identity() * shift;
    let p2 = b.norm_squared() / 6.0;
    if p2 == 0.0 {
        return ([shift; 3], Mat3::identity());
    }
    let p = p2.sqrt();
    let r = ((b / p).determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l3 = 2.0 * p * phi.cos();
    let l1 = 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let l2 = -l1 - l3;
    let gap = (l2 - l1).min(l3 - l2);
    // Near a double root the trigonometric roots lose accuracy like eps/gap.
    if gap < 1e-2 * p * 6f64.sqrt() {
        return jacobi_eigen(&a);
    }
    let v3 = null_vector(&(b - Mat3::identity() * l3));
    let mut v1 = null_vector(&(b - Mat3::identity() * l1));
    v1 -= v3 * v3.dot(&v1);
    let v1 = v1.normalize();
    let v2 = v3.cross(&v1);
    let vecs = Mat3::from_columns(&[v1, v2, v3]);
    let mut vals = [0.0; 3];
    for (i, v) in vals.iter_mut().enumerate() {
        let c = vecs.column(i);
        *v = (c.transpose() * a * c)[(0, 0)];
    }
    if !(vals[0] <= vals[1] && vals[1] <= vals[2]) {
        return jacobi_eigen(&a);
    }
    (vals, vecs)
}

/// Unit vector spanning the (numerically one-dimensional) null space of a
/// rank-2 symmetric matrix, via the best-conditioned row cross product.
fn null_vector(m: &Mat3) -> Vec3 {
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = cands
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .unwrap();
    best / best.norm()
}

/// Cyclic Jacobi eigen-solver; robust for (nearly) degenerate spectra.
pub fn jacobi_eigen(a: &Mat3) -> ([f64; 3], Mat3) {
    let mut m = *a;
    let mut v = Mat3::identity();
    let scale = m.norm();
    for _ in 0..60 {
        let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        if off.sqrt() <= 1e-18 * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut g = Mat3::identity();
            g[(p, p)] = c;
            g[(q, q)] = c;
            g[(p, q)] = s;
            g[(q, p)] = -s;
            m = g.transpose() * m * g;
            m[(p, q)] = 0.0;
            m[(q, p)] = 0.0;
            v *= g;
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let vals = [m[(idx[0], idx[0])], m[(idx[1], idx[1])], m[(idx[2], idx[2])]];
    let mut vecs = Mat3::from_columns(&[v.column(idx[0]), v.column(idx[1]), v.column(idx[2])]);
    if vecs.determinant() < 0.0 {
        vecs.set_column(0, &(-vecs.column(0)));
    }
    (vals, vecs)
}

/// True iff every eigenvalue lies in `[-1/3 + delta, 2/3 - delta]`.
pub fn is_physical(q: &QTensor, delta: f64) -> bool {
    let v = q.eigen().values;
    v[0] >= -1.0 / 3.0 + delta && v[2] <= 2.0 / 3.0 - delta
}

/// `1 - 6 (tr Q^3)^2 / (tr Q^2)^3`; zero for uniaxial tensors, one for
/// maximally biaxial ones.
pub fn biaxiality(q: &QTensor) -> f64 {
    let m = q.to_matrix();
    let t2 = (m * m).trace();
    if t2 <= f64::MIN_POSITIVE {
        return 0.0;
    }
    let t3 = (m * m * m).trace();
    (1.0 - 6.0 * t3 * t3 / (t2 * t2 * t2)).clamp(0.0, 1.0)
}

/// Frobenius norm of the commutator `AB - BA`.
pub fn commutator_norm(a: &QTensor, b: &QTensor) -> f64 {
    let (a, b) = (a.to_matrix(), b.to_matrix());
    (a * b - b * a).norm()
}

// ---------------------------------------------------------------------------
// Fully symmetric tensors indexed by monomial exponents.

/// Position of the monomial `x^a y^b z^(d-a-b)` among all degree-`d`
/// monomials ordered by descending `a`, then descending `b`.
pub const fn mono_index(d: usize, a: usize, b: usize) -> usize {
    (d - a) * (d - a + 1) / 2 + (d - a - b)
}

const fn build_table<const N: usize>(d: usize) -> [u8; N] {
    let mut t = [0u8; N];
    let mut flat = 0;
    while flat < N {
        let mut counts = [0usize; 3];
        let mut rest = flat;
        let mut k = 0;
        while k < d {
            counts[rest % 3] += 1;
            rest /= 3;
            k += 1;
        }
        t[flat] = mono_index(d, counts[0], counts[1]) as u8;
        flat += 1;
    }
    t
}

const fn build_exponents<const M: usize>(d: usize) -> [[u8; 3]; M] {
    let mut e = [[0u8; 3]; M];
    let mut a = 0;
    while a <= d {
        let mut b = 0;
        while b <= d - a {
            e[mono_index(d, a, b)] = [a as u8, b as u8, (d - a - b) as u8];
            b += 1;
        }
        a += 1;
    }
    e
}

const fn factorial(n: usize) -> usize {
    if n == 0 {
        1
    } else {
        n * factorial(n - 1)
    }
}

const fn build_multiplicity<const M: usize>(d: usize) -> [f64; M] {
    let e = build_exponents::<M>(d);
    let mut m = [0.0; M];
    let mut i = 0;
    while i < M {
        m[i] = (factorial(d)
            / (factorial(e[i][0] as usize) * factorial(e[i][1] as usize) * factorial(e[i][2] as usize)))
            as f64;
        i += 1;
    }
    m
}

/// Flat index `i + 3j + 9k + 27l` to unique-component slot.
pub static IDX4: [u8; 81] = build_table::<81>(4);
/// Flat index over six indices (base 3, first index least significant).
pub static IDX6: [u8; 729] = build_table::<729>(6);
pub static EXP4: [[u8; 3]; 15] = build_exponents::<15>(4);
pub static EXP6: [[u8; 3]; 28] = build_exponents::<28>(6);
pub static MULT4: [f64; 15] = build_multiplicity::<15>(4);
pub static MULT6: [f64; 28] = build_multiplicity::<28>(6);

#[inline]
fn flat4(i: usize, j: usize, k: usize, l: usize) -> usize {
    i + 3 * j + 9 * k + 27 * l
}

/// Fully symmetric fourth-order tensor (15 unique components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor4Sym {
    pub data: [f64; 15],
}

impl Default for Tensor4Sym {
    fn default() -> Self {
        Tensor4Sym { data: [0.0; 15] }
    }
}

impl Tensor4Sym {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[IDX4[flat4(i, j, k, l)] as usize]
    }

    /// Build from any function of four indices; the function is sampled once
    /// per unique component so it must itself be symmetric.
    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = [0.0; 15];
        for (s, e) in EXP4.iter().enumerate() {
            let idx = indices_of::<4>(e);
            data[s] = f(idx[0], idx[1], idx[2], idx[3]);
        }
        Tensor4Sym { data }
    }

    /// `(delta_ij delta_kl + delta_ik delta_jl + delta_il delta_jk) / 15`: the
    /// fourth moment of the uniform distribution.
    pub fn isotropic() -> Self {
        Self::from_fn(|i, j, k, l| {
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k)) / 15.0
        })
    }

    /// `(M : A)_ij = M_ijkl A_kl`.
    pub fn contract2(&self, a: &Mat3) -> Mat3 {
        contract42(self, a)
    }

    /// `A : M : C = A_ij M_ijkl C_kl`.
    pub fn quad_form(&self, a: &Mat3, c: &Mat3) -> f64 {
        a.component_mul(&contract42(self, c)).sum()
    }

    /// `M_ijkk`.
    pub fn partial_trace(&self) -> Mat3 {
        let mut m = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = (0..3).map(|k| self.get(i, j, k, k)).sum();
            }
        }
        m
    }

    /// `M_iijj`.
    pub fn full_trace(&self) -> f64 {
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, i, j, j))
            .sum()
    }

    /// `R_ia R_jb R_kc R_ld M_abcd`.
    pub fn rotate(&self, r: &Mat3) -> Self {
        let full = self.to_full();
        Self::from_fn(|i, j, k, l| {
            let mut s = 0.0;
            for (f, &v) in full.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let (a, b, c, d) = (f % 3, (f / 3) % 3, (f / 9) % 3, f / 27);
                s += r[(i, a)] * r[(j, b)] * r[(k, c)] * r[(l, d)] * v;
            }
            s
        })
    }

    pub fn to_full(&self) -> [f64; 81] {
        let mut f = [0.0; 81];
        for (x, s) in f.iter_mut().zip(IDX4.iter()) {
            *x = self.data[*s as usize];
        }
        f
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.data
            .iter()
            .zip(o.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Tensor4Sym {
            data: self.data.map(|x| x * s),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut data = self.data;
        for (a, b) in data.iter_mut().zip(o.data) {
            *a += b;
        }
        Tensor4Sym { data }
    }
}

/// Fully symmetric sixth-order tensor (28 unique components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor6Sym {
    pub data: [f64; 28],
}

impl Default for Tensor6Sym {
    fn default() -> Self {
        Tensor6Sym { data: [0.0; 28] }
    }
}

impl Tensor6Sym {
    #[inline]
    pub fn get(&self, idx: [usize; 6]) -> f64 {
        let mut f = 0;
        let mut p = 1;
        for i in idx {
            f += i * p;
            p *= 3;
        }
        self.data[IDX6[f] as usize]
    }

    pub fn from_fn(f: impl Fn([usize; 6]) -> f64) -> Self {
        let mut data = [0.0; 28];
        for (s, e) in EXP6.iter().enumerate() {
            data[s] = f(indices_of::<6>(e));
        }
        Tensor6Sym { data }
    }

    /// `(M : B)_ijkl = M_ijklmn B_mn`.
    pub fn contract2(&self, b: &Mat3) -> Tensor4Sym {
        Tensor4Sym::from_fn(|i, j, k, l| {
            let mut s = 0.0;
            for m in 0..3 {
                for n in 0..3 {
                    s += self.get([i, j, k, l, m, n]) * b[(m, n)];
                }
            }
            s
        })
    }

    /// `M_ijklmm`.
    pub fn partial_trace(&self) -> Tensor4Sym {
        Tensor4Sym::from_fn(|i, j, k, l| (0..3).map(|m| self.get([i, j, k, l, m, m])).sum())
    }

    pub fn rotate(&self, r: &Mat3) -> Self {
        let full: Vec<f64> = IDX6.iter().map(|&s| self.data[s as usize]).collect();
        Self::from_fn(|o| {
            let mut s = 0.0;
            for (f, &v) in full.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let mut prod = v;
                let mut rest = f;
                for &oi in &o {
                    prod *= r[(oi, rest % 3)];
                    rest /= 3;
                }
                s += prod;
            }
            s
        })
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.data
            .iter()
            .zip(o.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Canonical index tuple (sorted) for an exponent triple.
fn indices_of<const D: usize>(e: &[u8; 3]) -> [usize; D] {
    let mut idx = [0usize; D];
    let mut p = 0;
    for (axis, &cnt) in e.iter().enumerate() {
        for _ in 0..cnt {
            idx[p] = axis;
            p += 1;
        }
    }
    idx
}

/// `(M : A)_ij = M_ijkl A_kl`.
pub fn contract42(m: &Tensor4Sym, a: &Mat3) -> Mat3 {
    let mut out = Mat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += m.data[IDX4[flat4(i, j, k, l)] as usize] * a[(k, l)];
                }
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Rotation matrix about a unit axis by angle `theta`.
pub fn axis_angle(axis: &Vec3, theta: f64) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), theta).into_inner()
}
