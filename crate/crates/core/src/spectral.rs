//! Fourier pseudo-spectral machinery on the doubly periodic square
//! `[0, 2 pi)^2`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Spectrum = Vec<Complex64>;

/// Uniform `n x n` periodic grid of side `2 pi`. Arrays are row-major with
/// the x index fastest: `idx = iy * n + ix`.
#[derive(Clone)]
pub struct Grid2d {
    pub n: usize,
    pub length: f64,
    /// Integer wavenumber per 1D index; the Nyquist mode is mapped to zero
    /// so odd derivatives stay real.
    wave: Vec<f64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid2d").field("n", &self.n).finish()
    }
}

impl Grid2d {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Parameter(format!(
                "grid size must be even and >= 4, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let wave: Vec<f64> = (0..n)
            .map(|i| {
                if i < n / 2 {
                    i as f64
                } else if i == n / 2 {
                    0.0
                } else {
                    i as f64 - n as f64
                }
            })
            .collect();
        let cut = (n / 3) as i64;
        let signed = |i: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        let mut keep = vec![false; n * n];
        for iy in 0..n {
            for ix in 0..n {
                keep[iy * n + ix] = signed(ix).abs() <= cut && signed(iy).abs() <= cut;
            }
        }
        Ok(Grid2d {
            n,
            length: 2.0 * std::f64::consts::PI,
            wave,
            keep,
            fwd,
            inv,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let h = self.dx();
        ((idx % self.n) as f64 * h, (idx / self.n) as f64 * h)
    }

    /// Wavevector `(kx, ky)` of flat spectral index `idx`.
    #[inline]
    pub fn k(&self, idx: usize) -> (f64, f64) {
        (self.wave[idx % self.n], self.wave[idx / self.n])
    }

    /// True for modes retained by the 2/3 dealiasing rule.
    #[inline]
    pub fn retained(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.cell_area() * f.iter().sum::<f64>()
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    pub fn forward(&self, f: &[f64]) -> Spectrum {
        let mut d: Spectrum = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut d, &self.fwd);
        d
    }

    pub fn inverse(&self, fh: &[Complex64]) -> Vec<f64> {
        let mut d = fh.to_vec();
        self.transform(&mut d, &self.inv);
        let s = 1.0 / self.len() as f64;
        d.iter().map(|c| c.re * s).collect()
    }

    /// Transform two real fields with one complex FFT.
    pub fn forward_pair(&self, f: &[f64], g: &[f64]) -> (Spectrum, Spectrum) {
        let mut d: Spectrum = f
            .iter()
            .zip(g.iter())
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        self.transform(&mut d, &self.fwd);
        let n = self.n;
        let mut fh = vec![Complex64::new(0.0, 0.0); d.len()];
        let mut gh = vec![Complex64::new(0.0, 0.0); d.len()];
        for iy in 0..n {
            for ix in 0..n {
                let i = iy * n + ix;
                let j = ((n - iy) % n) * n + (n - ix) % n;
                let a = d[i];
                let b = d[j].conj();
                fh[i] = (a + b) * 0.5;
                gh[i] = (a - b) * Complex64::new(0.0, -0.5);
            }
        }
        (fh, gh)
    }

    /// Inverse-transform two Hermitian spectra with one complex FFT.
    pub fn inverse_pair(&self, fh: &[Complex64], gh: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut d: Spectrum = fh.iter().zip(gh.iter()).map(|(a, b)| a + i * b).collect();
        self.transform(&mut d, &self.inv);
        let s = 1.0 / self.len() as f64;
        (
            d.iter().map(|c| c.re * s).collect(),
            d.iter().map(|c| c.im * s).collect(),
        )
    }

    /// Spectral derivative along `axis` (0 = x, 1 = y).
    pub fn deriv(&self, fh: &[Complex64], axis: usize) -> Spectrum {
        fh.iter()
            .enumerate()
            .map(|(idx, c)| {
                let (kx, ky) = self.k(idx);
                let k = if axis == 0 { kx } else { ky };
                Complex64::new(-c.im * k, c.re * k)
            })
            .collect()
    }

    /// Gradient of a physical field; the z component is zero since fields do
    /// not depend on z.
    pub fn gradient(&self, f: &[f64]) -> [Vec<f64>; 3] {
        let fh = self.forward(f);
        let (dx, dy) = self.inverse_pair(&self.deriv(&fh, 0), &self.deriv(&fh, 1));
        [dx, dy, vec![0.0; f.len()]]
    }

    pub fn dealias(&self, fh: &mut [Complex64]) {
        for (c, &k) in fh.iter_mut().zip(self.keep.iter()) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

fn transpose(d: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            d.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_trig_mode() {
        let g = Grid2d::new(16).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                (2.0 * x + 3.0 * y).sin()
            })
            .collect();
        let [dx, dy, _] = g.gradient(&f);
        for i in 0..g.len() {
            let (x, y) = g.coords(i);
            assert!((dx[i] - 2.0 * (2.0 * x + 3.0 * y).cos()).abs() < 1e-12);
            assert!((dy[i] - 3.0 * (2.0 * x + 3.0 * y).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_transforms_round_trip() {
        let g = Grid2d::new(8).unwrap();
        let f: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let h: Vec<f64> = (0..64).map(|i| (i as f64 * 0.11).cos() + 0.2).collect();
        let (fh, hh) = g.forward_pair(&f, &h);
        let fh1 = g.forward(&f);
        for (a, b) in fh.iter().zip(fh1.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let (f2, h2) = g.inverse_pair(&fh, &hh);
        for i in 0..64 {
            assert!((f2[i] - f[i]).abs() < 1e-13 && (h2[i] - h[i]).abs() < 1e-13);
        }
    }
}
