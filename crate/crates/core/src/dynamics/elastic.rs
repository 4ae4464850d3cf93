use nalgebra::Matrix5;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::ModelParams;
use crate::closure::{solve_point, ClosureOptions};
use crate::error::{Error, Result};
use crate::quadrature::SphereQuadrature;
use crate::spectral::{Grid2d, Spectrum};
use crate::tensor::{q_basis, Mat3, QTensor, Vec3};

/// Fourier symbol of `L` in the orthonormal Q basis at wavevector
/// `(kx, ky, 0)`: `S_ab = L1 |k|^2 delta_ab + 2 L2 (E_a k).(E_b k)`.
pub fn ell_symbol(kx: f64, ky: f64, l1: f64, l2: f64) -> Matrix5<f64> {
    let basis = q_basis();
    let k = Vec3::new(kx, ky, 0.0);
    let ek: [Vec3; 5] = std::array::from_fn(|a| basis[a] * k);
    let k2 = kx * kx + ky * ky;
    Matrix5::from_fn(|a, b| {
        let d = if a == b { l1 * k2 } else { 0.0 };
        d + 2.0 * l2 * ek[a].dot(&ek[b])
    })
}

pub(crate) fn to_basis_fields(q: &[QTensor]) -> [Vec<f64>; 5] {
    let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(q.len()));
    for t in q {
        let y = t.to_basis();
        for a in 0..5 {
            out[a].push(y[a]);
        }
    }
    out
}

pub(crate) fn from_basis_fields(y: &[Vec<f64>; 5]) -> Vec<QTensor> {
    (0..y[0].len())
        .map(|i| QTensor::from_basis(std::array::from_fn(|a| y[a][i])))
        .collect()
}

/// Forward transforms of several real fields, two per complex FFT.
pub(crate) fn forward_many(grid: &Grid2d, fields: &[&[f64]]) -> Vec<Spectrum> {
    let chunks: Vec<&[&[f64]]> = fields.chunks(2).collect();
    let parts: Vec<Vec<Spectrum>> = chunks
        .par_iter()
        .map(|c| {
            if c.len() == 2 {
                let (a, b) = grid.forward_pair(c[0], c[1]);
                vec![a, b]
            } else {
                vec![grid.forward(c[0])]
            }
        })
        .collect();
    parts.into_iter().flatten().collect()
}

pub(crate) fn inverse_many(grid: &Grid2d, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
    let chunks: Vec<&[&[Complex64]]> = spectra.chunks(2).collect();
    let parts: Vec<Vec<Vec<f64>>> = chunks
        .par_iter()
        .map(|c| {
            if c.len() == 2 {
                let (a, b) = grid.inverse_pair(c[0], c[1]);
                vec![a, b]
            } else {
                vec![grid.inverse(c[0])]
            }
        })
        .collect();
    parts.into_iter().flatten().collect()
}

pub(crate) fn apply_symbol(
    grid: &Grid2d,
    yh: &[Spectrum],
    l1: f64,
    l2: f64,
) -> [Spectrum; 5] {
    let mut out: [Spectrum; 5] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); grid.len()]);
    for idx in 0..grid.len() {
        let (kx, ky) = grid.k(idx);
        let s = ell_symbol(kx, ky, l1, l2);
        for a in 0..5 {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..5 {
                acc += yh[b][idx] * s[(a, b)];
            }
            out[a][idx] = acc;
        }
    }
    out
}

fn check_len(q: &[QTensor], grid: &Grid2d) -> Result<()> {
    if q.len() != grid.len() {
        return Err(Error::Parameter(format!(
            "field has {} points, grid has {}",
            q.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// `L(Q)_ij = -(L1 Lap Q_ij + L2 (Q_ik,jk + Q_jk,ik))`, symmetrized and
/// detraced, with spectral derivatives.
pub fn ell_operator(q: &[QTensor], grid: &Grid2d, l1: f64, l2: f64) -> Result<Vec<QTensor>> {
    check_len(q, grid)?;
    let y = to_basis_fields(q);
    let refs: Vec<&[f64]> = y.iter().map(|v| v.as_slice()).collect();
    let yh = forward_many(grid, &refs);
    let lh = apply_symbol(grid, &yh, l1, l2);
    let lrefs: Vec<&[Complex64]> = lh.iter().map(|v| v.as_slice()).collect();
    let l = inverse_many(grid, &lrefs);
    let arr: [Vec<f64>; 5] = l.try_into().expect("five components");
    Ok(from_basis_fields(&arr))
}

/// `[d_x Q, d_y Q]` at every point.
pub(crate) fn q_gradients(q: &[QTensor], grid: &Grid2d) -> [Vec<Mat3>; 2] {
    let y = to_basis_fields(q);
    let refs: Vec<&[f64]> = y.iter().map(|v| v.as_slice()).collect();
    let yh = forward_many(grid, &refs);
    let mut d: Vec<Spectrum> = Vec::with_capacity(10);
    for axis in 0..2 {
        for a in 0..5 {
            d.push(grid.deriv(&yh[a], axis));
        }
    }
    let drefs: Vec<&[Complex64]> = d.iter().map(|v| v.as_slice()).collect();
    let phys = inverse_many(grid, &drefs);
    let make = |axis: usize| -> Vec<Mat3> {
        (0..grid.len())
            .map(|i| {
                QTensor::from_basis(std::array::from_fn(|a| phys[axis * 5 + a][i])).to_matrix()
            })
            .collect()
    };
    [make(0), make(1)]
}

/// Distortion stress `sigma_ji = -(L1 Q_kl,j Qt_kl,i + L2 Q_km,m Qt_kj,i +
/// L2 Q_kj,l Qt_kl,i)`, returned as matrices with entry `(j, i)`.
pub fn distortion_stress(
    q: &[QTensor],
    qt: &[QTensor],
    grid: &Grid2d,
    l1: f64,
    l2: f64,
) -> Result<Vec<Mat3>> {
    check_len(q, grid)?;
    check_len(qt, grid)?;
    let gq = q_gradients(q, grid);
    let gt = q_gradients(qt, grid);
    let zero = Mat3::zeros();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|p| {
            let dq = |axis: usize| if axis < 2 { &gq[axis][p] } else { &zero };
            let dt = |axis: usize| if axis < 2 { &gt[axis][p] } else { &zero };
            // (div Q)_k = Q_km,m
            let div: Vec3 = Vec3::from_fn(|k, _| (0..3).map(|m| dq(m)[(k, m)]).sum());
            let mut s = Mat3::zeros();
            for j in 0..3 {
                for i in 0..3 {
                    let first = l1 * dq(j).component_mul(dt(i)).sum();
                    let second: f64 = (0..3).map(|k| div[k] * dt(i)[(k, j)]).sum();
                    let mut third = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            third += dq(l)[(k, j)] * dt(i)[(k, l)];
                        }
                    }
                    s[(j, i)] = -(first + l2 * (second + third));
                }
            }
            s
        })
        .collect())
}

/// Elastic energy `eps/2 int L1 |grad Q|^2 + L2 (Q_ik,i Q_jk,j + Q_jk,i Q_ik,j)`.
pub fn elastic_energy(q: &[QTensor], grid: &Grid2d, params: &ModelParams) -> Result<f64> {
    check_len(q, grid)?;
    let g = q_gradients(q, grid);
    let zero = Mat3::zeros();
    let (l1, l2) = (params.l1, params.l2);
    let dens: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let d = |axis: usize| if axis < 2 { &g[axis][p] } else { &zero };
            let grad2: f64 = (0..3).map(|i| d(i).norm_squared()).sum();
            let div: Vec3 = Vec3::from_fn(|k, _| (0..3).map(|i| d(i)[(i, k)]).sum());
            let mut cross = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        cross += d(i)[(j, k)] * d(j)[(i, k)];
                    }
                }
            }
            l1 * grad2 + l2 * (div.norm_squared() + cross)
        })
        .collect();
    Ok(0.5 * params.epsilon * grid.integrate(&dens))
}

/// Chemical potential `mu = B_Q - alpha Q + eps L(Q)` at every grid point.
pub fn mu_q(
    q: &[QTensor],
    grid: &Grid2d,
    params: &ModelParams,
    quad: &SphereQuadrature,
) -> Result<Vec<QTensor>> {
    check_len(q, grid)?;
    params.validate()?;
    let l = ell_operator(q, grid, params.l1, params.l2)?;
    let opts = ClosureOptions::with_delta(params.monitor_margin());
    let n = grid.n;
    q.par_iter()
        .enumerate()
        .map(|(idx, qp)| {
            let p = solve_point(qp, &opts, quad, None).map_err(|e| locate(e, idx, n))?;
            Ok(p.b_tensor() - *qp * params.alpha + l[idx] * params.epsilon)
        })
        .collect()
}

/// Attach a grid location to a physicality failure.
pub(crate) fn locate(e: Error, idx: usize, n: usize) -> Error {
    match e {
        Error::NonPhysical { eigenvalues, delta } => Error::PhysicalityLost {
            ix: idx % n,
            iy: idx / n,
            eigenvalues,
            delta,
        },
        other => other,
    }
}
