use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FieldState;
use crate::error::{Error, Result};
use crate::spectral::Grid2d;
use crate::tensor::QTensor;

/// Random trigonometric polynomial with wavenumbers `|kx|, |ky| <= kmax`
/// and coefficients decaying like `1 / (1 + |k|^2)`.
fn random_mode_sum<R: Rng>(rng: &mut R, grid: &Grid2d, kmax: i32) -> Vec<f64> {
    let mut f = vec![0.0; grid.len()];
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let amp = 1.0 / (1.0 + k2);
            let a = rng.gen_range(-1.0..1.0) * amp;
            let b = rng.gen_range(-1.0..1.0) * amp;
            for (i, out) in f.iter_mut().enumerate() {
                let (x, y) = grid.coords(i);
                let ph = kx as f64 * x + ky as f64 * y;
                *out += a * ph.cos() + b * ph.sin();
            }
        }
    }
    f
}

/// Smooth random initial data: `Q` inside the physical set with margin
/// `delta`, and a divergence-free velocity with maximum speed `speed`.
pub fn random_smooth_state(
    n: usize,
    seed: u64,
    delta: f64,
    speed: f64,
    kmax: i32,
) -> Result<FieldState> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) || !(speed >= 0.0) || kmax < 1 {
        return Err(Error::Parameter(
            "random state needs delta in (0, 1/3), speed >= 0 and kmax >= 1".into(),
        ));
    }
    let grid = Grid2d::new(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-0.1..0.1));
    let comps: Vec<Vec<f64>> = (0..5).map(|_| random_mode_sum(&mut rng, &grid, kmax)).collect();
    let raw: Vec<QTensor> = (0..grid.len())
        .map(|i| QTensor::from_basis(std::array::from_fn(|a| mean[a] + comps[a][i])))
        .collect();
    // The physical set is convex and contains 0, so the admissible scalings
    // form an interval [0, s_max].
    let ok = |s: f64| raw.iter().all(|q| (*q * s).is_physical(delta));
    let (mut lo, mut hi) = (0.0, 1.0);
    while ok(hi) && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.95 * lo;
    let q: Vec<QTensor> = raw.iter().map(|t| *t * s).collect();

    // v = (d_y psi, -d_x psi, w).
    let psi = random_mode_sum(&mut rng, &grid, kmax);
    let w = random_mode_sum(&mut rng, &grid, kmax);
    let [px, py, _] = grid.gradient(&psi);
    let mut v = [py, px.iter().map(|x| -x).collect::<Vec<_>>(), w];
    let vmax = (0..grid.len())
        .map(|i| (v[0][i].powi(2) + v[1][i].powi(2) + v[2][i].powi(2)).sqrt())
        .fold(0.0, f64::max);
    if vmax > 0.0 {
        for c in v.iter_mut() {
            for x in c.iter_mut() {
                *x *= speed / vmax;
            }
        }
    }
    FieldState::new(n, 0.0, q, v)
}
