#![allow(dead_code)]

use proptest::prelude::*;
use qtensor_core::tensor::{Mat3, QTensor, Vec3};
use rand::Rng;

pub mod mms;

/// Rotation matrix from a (not necessarily normalized) quaternion.
pub fn rotation_from_quat(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            return rotation_from_quat(q[0], q[1], q[2], q[3]);
        }
    }
}

/// Uniformly sampled eigenvalue pair with the third fixed by tracelessness,
/// all three inside `[-1/3 + delta, 2/3 - delta]`.
pub fn physical_eigenvalues<R: Rng>(rng: &mut R, delta: f64) -> [f64; 3] {
    let lo = -1.0 / 3.0 + delta;
    let hi = 2.0 / 3.0 - delta;
    loop {
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(lo..hi);
        let c = -a - b;
        if c >= lo && c <= hi {
            return [a, b, c];
        }
    }
}

pub fn random_physical_q<R: Rng>(rng: &mut R, delta: f64) -> QTensor {
    let l = physical_eigenvalues(rng, delta);
    let r = random_rotation(rng);
    QTensor::from_matrix(&(r * Mat3::from_diagonal(&l.into()) * r.transpose()))
}

pub fn random_q<R: Rng>(rng: &mut R, scale: f64) -> QTensor {
    QTensor::from_basis(std::array::from_fn(|_| rng.gen_range(-scale..scale)))
}

pub fn random_matrix<R: Rng>(rng: &mut R, scale: f64) -> Mat3 {
    Mat3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

pub fn q_tensor(scale: f64) -> impl Strategy<Value = QTensor> {
    proptest::array::uniform5(-scale..scale).prop_map(QTensor::from_basis)
}

pub fn rotation() -> impl Strategy<Value = Mat3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-2)
        .prop_map(|(w, x, y, z)| rotation_from_quat(w, x, y, z))
}

pub fn physical_q(delta: f64) -> impl Strategy<Value = QTensor> {
    let lo = -1.0 / 3.0 + delta;
    let hi = 2.0 / 3.0 - delta;
    (lo..hi, lo..hi, rotation())
        .prop_filter("third eigenvalue in range", move |(a, b, _)| {
            let c = -a - b;
            c >= lo && c <= hi
        })
        .prop_map(|(a, b, r)| {
            QTensor::from_matrix(&(r * Mat3::from_diagonal(&Vec3::new(a, b, -a - b)) * r.transpose()))
        })
}

/// Smooth periodic unit director field on an `n x n` grid of side `2 pi`,
/// built from polar and azimuthal angles that are low-mode trigonometric sums.
pub fn smooth_director_field<R: Rng>(rng: &mut R, n: usize, kmax: i32, amplitude: f64) -> Vec<Vec3> {
    let mut modes = Vec::new();
    for kx in -kmax..=kmax {
        for ky in -kmax..=kmax {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a = rng.gen_range(-amplitude..amplitude);
            let b = rng.gen_range(-amplitude..amplitude);
            let pa = rng.gen_range(0.0..std::f64::consts::TAU);
            let pb = rng.gen_range(0.0..std::f64::consts::TAU);
            modes.push((kx as f64, ky as f64, a, b, pa, pb));
        }
    }
    let theta0 = rng.gen_range(0.3..1.2);
    let phi0 = rng.gen_range(0.0..std::f64::consts::TAU);
    let h = std::f64::consts::TAU / n as f64;
    (0..n * n)
        .map(|idx| {
            let (x, y) = ((idx % n) as f64 * h, (idx / n) as f64 * h);
            let (mut th, mut ph) = (theta0, phi0);
            for &(kx, ky, a, b, pa, pb) in &modes {
                let arg = kx * x + ky * y;
                th += a * (arg + pa).cos();
                ph += b * (arg + pb).cos();
            }
            Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos())
        })
        .collect()
}
