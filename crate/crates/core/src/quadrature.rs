//! Quadrature on the unit sphere, Bingham partition functions and moment
//! tensors, and the axisymmetric integrals `A_k(eta)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Mat3, QTensor, Tensor4Sym, Tensor6Sym, EXP4, EXP6};

/// Largest admissible eigenvalue spread of `B` in exponentials.
pub const EXPONENT_BUDGET: f64 = 300.0;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p, d)
}

/// Tensor-product rule on S^2: Gauss-Legendre in `cos(theta)` times the
/// offset trapezoid rule in `phi`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n_polar: usize,
    pub n_azimuthal: usize,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Reduced rule for integrands that are even in every coordinate: nodes
    /// of the first octant carrying the squared coordinates and 8x weights.
    pub(crate) octant_sq: Vec<[f64; 3]>,
    pub(crate) octant_w: Vec<f64>,
}

impl SphereQuadrature {
    pub const DEFAULT_RESOLUTION: (usize, usize) = (64, 128);

    pub fn new(n_polar: usize, n_azimuthal: usize) -> Result<Self> {
        if n_polar < 8 || n_azimuthal < 16 {
            return Err(Error::Parameter(format!(
                "quadrature needs n_polar >= 8 and n_azimuthal >= 16 (got {n_polar}, {n_azimuthal})"
            )));
        }
        if n_polar % 2 != 0 || n_azimuthal % 4 != 0 {
            return Err(Error::Parameter(format!(
                "quadrature needs even n_polar and n_azimuthal divisible by 4 (got {n_polar}, {n_azimuthal})"
            )));
        }
        let (x, wx) = gauss_legendre(n_polar);
        let dphi = 2.0 * std::f64::consts::PI / n_azimuthal as f64;
        let mut nodes = Vec::with_capacity(n_polar * n_azimuthal);
        let mut weights = Vec::with_capacity(n_polar * n_azimuthal);
        let mut octant_sq = Vec::new();
        let mut octant_w = Vec::new();
        for (xi, wi) in x.iter().zip(wx.iter()) {
            let st = (1.0 - xi * xi).max(0.0).sqrt();
            for k in 0..n_azimuthal {
                let phi = dphi * (k as f64 + 0.5);
                let m = [st * phi.cos(), st * phi.sin(), *xi];
                nodes.push(m);
                weights.push(wi * dphi);
                if *xi > 0.0 && k < n_azimuthal / 4 {
                    octant_sq.push([m[0] * m[0], m[1] * m[1], m[2] * m[2]]);
                    octant_w.push(8.0 * wi * dphi);
                }
            }
        }
        Ok(SphereQuadrature {
            n_polar,
            n_azimuthal,
            nodes,
            weights,
            octant_sq,
            octant_w,
        })
    }

    pub fn default_rule() -> Self {
        let (p, a) = Self::DEFAULT_RESOLUTION;
        Self::new(p, a).expect("default quadrature is valid")
    }

    /// Highest total degree of polynomial integrated exactly.
    pub fn exact_degree(&self) -> usize {
        (2 * self.n_polar - 1).min(self.n_azimuthal - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(m, w)| w * f(m))
            .sum()
    }
}

/// Partition function and moment tensors of the Bingham density
/// `exp(mm : B) / Z`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinghamMoments {
    pub b: QTensor,
    pub z: f64,
    pub log_z: f64,
    /// Traceless second moment `<mm> - I/3`.
    pub q: QTensor,
    pub m4: Tensor4Sym,
    pub m6: Tensor6Sym,
}

fn check_budget(b: &QTensor) -> Result<(f64, f64)> {
    if !b.is_finite() {
        return Err(Error::NonFinite("B"));
    }
    let ev = b.eigen().values;
    let spread = ev[2] - ev[0];
    if spread > EXPONENT_BUDGET {
        return Err(Error::ExponentBudget {
            spread,
            budget: EXPONENT_BUDGET,
        });
    }
    Ok((ev[2], spread))
}

/// Bingham moments by a single lab-frame sweep over the quadrature.
pub fn moments_of(b: &QTensor, quad: &SphereQuadrature) -> Result<BinghamMoments> {
    let (lmax, _) = check_budget(b)?;
    let bm = b.to_matrix();
    let mut z = 0.0;
    let mut m4 = [0.0; 15];
    let mut m6 = [0.0; 28];
    let mut m2 = Mat3::zeros();
    for (m, w) in quad.nodes.iter().zip(quad.weights.iter()) {
        let mut e = -lmax;
        for i in 0..3 {
            for j in 0..3 {
                e += bm[(i, j)] * m[i] * m[j];
            }
        }
        let f = w * e.exp();
        z += f;
        for i in 0..3 {
            for j in i..3 {
                m2[(i, j)] += f * m[i] * m[j];
            }
        }
        let mut pw = [[1.0; 7]; 3];
        for a in 0..3 {
            for p in 1..7 {
                pw[a][p] = pw[a][p - 1] * m[a];
            }
        }
        for (s, ex) in EXP4.iter().enumerate() {
            m4[s] += f * pw[0][ex[0] as usize] * pw[1][ex[1] as usize] * pw[2][ex[2] as usize];
        }
        for (s, ex) in EXP6.iter().enumerate() {
            m6[s] += f * pw[0][ex[0] as usize] * pw[1][ex[1] as usize] * pw[2][ex[2] as usize];
        }
    }
    let m4 = Tensor4Sym {
        data: m4.map(|x| x / z),
    };
    let m6 = Tensor6Sym {
        data: m6.map(|x| x / z),
    };
    let second = Mat3::from_fn(|i, j| m2[(i.min(j), i.max(j))] / z);
    let q = QTensor::from_matrix(&second);
    Ok(BinghamMoments {
        b: *b,
        z: z * lmax.exp(),
        log_z: z.ln() + lmax,
        q,
        m4,
        m6,
    })
}

/// `omega(B) = ln Z(B)`.
pub fn log_partition(b: &QTensor, quad: &SphereQuadrature) -> Result<f64> {
    let (lmax, _) = check_budget(b)?;
    let bm = b.to_matrix();
    let z = quad.integrate(|m| {
        let mut e = -lmax;
        for i in 0..3 {
            for j in 0..3 {
                e += bm[(i, j)] * m[i] * m[j];
            }
        }
        e.exp()
    });
    Ok(z.ln() + lmax)
}

/// Second moment `<mm>` of a Bingham density (not detraced).
pub fn second_moment(mo: &BinghamMoments) -> Mat3 {
    mo.q.to_matrix() + Mat3::identity() / 3.0
}

const AXI_NODES: usize = 200;

fn axi_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(AXI_NODES))
}

/// Scaled axisymmetric integrals: returns `(s, [A_0, A_2, A_4, A_6] e^{-s})`
/// with `s = max(eta, 0)`.
pub fn axisymmetric_scaled(eta: f64) -> Result<(f64, [f64; 4])> {
    if !eta.is_finite() {
        return Err(Error::NonFinite("eta"));
    }
    if eta.abs() > EXPONENT_BUDGET {
        return Err(Error::ExponentBudget {
            spread: eta.abs(),
            budget: EXPONENT_BUDGET,
        });
    }
    let s = eta.max(0.0);
    let (x, w) = axi_rule();
    let mut a = [0.0; 4];
    for (xi, wi) in x.iter().zip(w.iter()) {
        let x2 = xi * xi;
        let f = wi * (eta * x2 - s).exp();
        a[0] += f;
        a[1] += f * x2;
        a[2] += f * x2 * x2;
        a[3] += f * x2 * x2 * x2;
    }
    Ok((s, a))
}

/// `A_k(eta) = integral_{-1}^{1} x^k e^{eta x^2} dx` for even `k <= 6`.
pub fn axisymmetric_ak(eta: f64, k: usize) -> Result<f64> {
    if k % 2 != 0 || k > 6 {
        return Err(Error::Parameter(format!("A_k needs even k <= 6, got {k}")));
    }
    let (s, a) = axisymmetric_scaled(eta)?;
    Ok(a[k / 2] * s.exp())
}

/// Order parameters `(S2, S4)` of the axisymmetric density `e^{eta x^2}`.
pub fn order_parameters(eta: f64) -> Result<(f64, f64)> {
    let (_, a) = axisymmetric_scaled(eta)?;
    Ok(s2_s4(&a))
}

pub(crate) fn s2_s4(a: &[f64; 4]) -> (f64, f64) {
    let s2 = (3.0 * a[1] - a[0]) / (2.0 * a[0]);
    let s4 = (35.0 * a[2] - 30.0 * a[1] + 3.0 * a[0]) / (8.0 * a[0]);
    (s2, s4)
}
