//! Uniaxial equilibria of the Bingham bulk energy, the critical interaction
//! strength, order parameters and the derived Leslie/Frank coefficients.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{axisymmetric_scaled, s2_s4};
use crate::spectral::Grid2d;
use crate::tensor::Vec3;

/// Scan step and range used to bracket roots in `eta`.
pub const SCAN_STEP: f64 = 0.25;
pub const SCAN_MAX: f64 = 60.0;
const SCAN_LIMIT: f64 = 290.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Isotropic,
    Stable,
    Unstable,
}

/// Residual of the critical-point equation together with derivatives.
#[derive(Debug, Clone, Copy)]
struct Residual {
    g: f64,
    g_eta: f64,
    g_eta2: f64,
}

/// `G(eta) = 3 e^eta / int_0^1 e^{eta x^2} dx - (3 + 2 eta + 4 eta^2 / alpha)`.
fn residual(eta: f64, alpha: f64) -> Result<Residual> {
    let (s, a) = axisymmetric_scaled(eta)?;
    let r = 6.0 * (eta - s).exp() / a[0];
    let rho2 = a[1] / a[0];
    let rho4 = a[2] / a[0];
    let g = r - 3.0 - 2.0 * eta - 4.0 * eta * eta / alpha;
    let g_eta = r * (1.0 - rho2) - 2.0 - 8.0 * eta / alpha;
    let g_eta2 = r * (1.0 - rho2).powi(2) - r * (rho4 - rho2 * rho2) - 8.0 / alpha;
    Ok(Residual { g, g_eta, g_eta2 })
}

/// Residual of the critical-point equation at `(eta, alpha)`.
pub fn critical_point_residual(eta: f64, alpha: f64) -> Result<f64> {
    Ok(residual(eta, alpha)?.g)
}

/// `d G / d eta`.
pub fn critical_point_residual_derivative(eta: f64, alpha: f64) -> Result<f64> {
    Ok(residual(eta, alpha)?.g_eta)
}

/// `A_0 / (A_2 - A_4)`: the interaction strength for which `eta` is a
/// nonzero critical point.
pub fn alpha_of_eta(eta: f64) -> Result<f64> {
    let (_, a) = axisymmetric_scaled(eta)?;
    Ok(a[0] / (a[1] - a[2]))
}

/// `G(eta) / eta^2`, continuous through zero.
fn reduced(eta: f64, alpha: f64) -> Result<f64> {
    if eta == 0.0 {
        return Ok(8.0 / 15.0 - 4.0 / alpha);
    }
    Ok(residual(eta, alpha)?.g / (eta * eta))
}

/// Safeguarded Newton on `G` within a sign-change bracket.
fn polish_newton(mut lo: f64, mut hi: f64, alpha: f64) -> Result<f64> {
    let mut glo = residual(lo, alpha)?.g;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(x, alpha)?;
        if r.g == 0.0 {
            return Ok(x);
        }
        if (r.g > 0.0) == (glo > 0.0) {
            lo = x;
            glo = r.g;
        } else {
            hi = x;
        }
        let newton = x - r.g / r.g_eta;
        let next = if newton.is_finite() && newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) || (hi - lo).abs() < 1e-15 {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Illinois false position on the reduced residual `G / eta^2`.
fn polish_reduced(mut a: f64, mut b: f64, alpha: f64) -> Result<f64> {
    let mut fa = reduced(a, alpha)?;
    let mut fb = reduced(b, alpha)?;
    let mut side = 0i32;
    for _ in 0..300 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
            c
        } else {
            0.5 * (a + b)
        };
        let fc = reduced(c, alpha)?;
        if fc == 0.0 || (b - a).abs() < 1e-15 * c.abs().max(1e-3) {
            return Ok(c);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Solve the critical-point equation for the requested branch.
pub fn solve_eta(alpha: f64, branch: Branch) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if branch == Branch::Isotropic {
        return Ok(0.0);
    }
    let (alpha_star, _) = critical_alpha_cached();
    if alpha <= alpha_star {
        return Err(Error::BranchNotPresent { alpha, alpha_star });
    }
    match branch {
        Branch::Isotropic => unreachable!(),
        Branch::Stable => {
            let top = {
                let mut hi = SCAN_MAX;
                while residual(hi, alpha)?.g > 0.0 {
                    hi += 10.0;
                    if hi > SCAN_LIMIT {
                        return Err(Error::ExponentBudget {
                            spread: hi,
                            budget: SCAN_LIMIT,
                        });
                    }
                }
                hi
            };
            let mut hi = top;
            let mut ghi = residual(hi, alpha)?.g;
            loop {
                let lo = hi - SCAN_STEP;
                if lo <= 0.0 {
                    break;
                }
                let glo = residual(lo, alpha)?.g;
                if (glo > 0.0) != (ghi > 0.0) {
                    return polish_newton(lo, hi, alpha);
                }
                hi = lo;
                ghi = glo;
            }
            // The two nonzero roots fall inside one scan cell; split the cell at
            // the maximiser of G.
            let (eta_max, gmax) = maximise_g(alpha)?;
            if gmax < 0.0 {
                return Err(Error::BranchNotPresent { alpha, alpha_star });
            }
            polish_newton(eta_max, eta_max + SCAN_STEP * 2.0, alpha)
        }
        Branch::Unstable => {
            let n = (SCAN_MAX / SCAN_STEP) as i64;
            let mut prev_x = -SCAN_MAX;
            let mut prev = reduced(prev_x, alpha)?;
            for i in (-n + 1)..=n {
                let x = i as f64 * SCAN_STEP;
                let f = reduced(x, alpha)?;
                if (f > 0.0) != (prev > 0.0) {
                    if x == 0.0 && f == 0.0 {
                        return Ok(0.0);
                    }
                    return polish_reduced(prev_x, x, alpha);
                }
                prev = f;
                prev_x = x;
            }
            let (eta_max, gmax) = maximise_g(alpha)?;
            if gmax < 0.0 {
                return Err(Error::BranchNotPresent { alpha, alpha_star });
            }
            polish_reduced(eta_max - 2.0 * SCAN_STEP, eta_max, alpha)
        }
    }
}

/// Maximiser of `G(.; alpha)` over `eta in (0, SCAN_MAX]` by scan plus
/// golden-section refinement.
fn maximise_g(alpha: f64) -> Result<(f64, f64)> {
    let n = (SCAN_MAX / SCAN_STEP) as usize;
    let mut best = (SCAN_STEP, f64::NEG_INFINITY);
    for i in 1..=n {
        let x = i as f64 * SCAN_STEP;
        let g = residual(x, alpha)?.g;
        if g > best.1 {
            best = (x, g);
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((best.0 - SCAN_STEP).max(1e-6), best.0 + SCAN_STEP);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = residual(c, alpha)?.g;
    let mut fd = residual(d, alpha)?.g;
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = residual(c, alpha)?.g;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = residual(d, alpha)?.g;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, residual(x, alpha)?.g))
}

/// Critical strength `alpha*` and the coalescence point `eta*` where the two
/// nonzero roots meet (`G = dG/deta = 0`).
pub fn critical_alpha(tol: f64) -> Result<(f64, f64)> {
    if !(tol >= 1e-10) {
        return Err(Error::Parameter(format!("tol must be >= 1e-10, got {tol}")));
    }
    let (mut lo, mut hi) = (6.0, 7.5);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if maximise_g(mid)?.1 >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut alpha = 0.5 * (lo + hi);
    let mut eta = maximise_g(alpha)?.0;
    for _ in 0..50 {
        let r = residual(eta, alpha)?;
        let ga = 4.0 * eta * eta / (alpha * alpha);
        let gea = 8.0 * eta / (alpha * alpha);
        let det = r.g_eta * gea - ga * r.g_eta2;
        let d_eta = (r.g * gea - ga * r.g_eta) / det;
        let d_alpha = (r.g_eta * r.g_eta - r.g * r.g_eta2) / det;
        eta -= d_eta;
        alpha -= d_alpha;
        if d_eta.abs() < 1e-15 * eta.abs() && d_alpha.abs() < 1e-15 * alpha {
            break;
        }
    }
    let r = residual(eta, alpha)?;
    if r.g.abs() > tol || r.g_eta.abs() > tol {
        return Err(Error::NoConvergence {
            what: "critical alpha tangency solve",
            iterations: 50,
            residual: r.g.abs().max(r.g_eta.abs()),
        });
    }
    Ok((alpha, eta))
}

fn critical_alpha_cached() -> (f64, f64) {
    static CACHE: OnceLock<(f64, f64)> = OnceLock::new();
    *CACHE.get_or_init(|| critical_alpha(1e-10).expect("critical alpha solve converges"))
}

/// `(alpha*, eta*)` computed once per process.
pub fn alpha_star() -> (f64, f64) {
    critical_alpha_cached()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrankConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConstants {
    pub alpha: f64,
    pub l1: f64,
    pub l2: f64,
    pub eta: f64,
    /// `[A_0, A_2, A_4, A_6]`.
    pub a: [f64; 4],
    pub s2: f64,
    pub s4: f64,
    pub xi: [f64; 3],
    pub psi: [f64; 3],
    /// Leslie coefficients `alpha_1 .. alpha_6`.
    pub leslie: [f64; 6],
    pub gamma1: f64,
    pub gamma2: f64,
    pub zeta: f64,
    pub frank: FrankConstants,
}

/// Numerical values of every identity the constants must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub eq_residual: f64,
    pub alpha_consistency: f64,
    /// `(3A_2^2 + 2A_0A_2 - 5A_0A_4) / A_0^2`.
    pub ineq_first: f64,
    /// `(6A_2 - 5A_4 - A_0) / A_0`.
    pub ineq_second: f64,
    pub xi_identity: f64,
    pub psi_identity: f64,
    pub xi3_closed_form: f64,
    pub parodi: f64,
    pub gamma1_identity: f64,
    pub gamma2_identity: f64,
    pub zeta_identity: f64,
    /// `alpha_1 + gamma_2^2/gamma_1`, `alpha_4`,
    /// `alpha_5 + alpha_6 - gamma_2^2/gamma_1`, `1/gamma_1`.
    pub dissipation: [f64; 4],
    /// Smallest eigenvalue of the viscous dissipation quadratic form
    /// `(alpha_1 + gamma_2^2/gamma_1)(D:nn)^2 + alpha_4 |D|^2 +
    /// (alpha_5 + alpha_6 - gamma_2^2/gamma_1)|D.n|^2` over unit symmetric
    /// traceless `D`.
    pub dissipation_form_min: f64,
}

impl InvariantReport {
    pub fn eq_ok(&self) -> bool {
        self.eq_residual <= 1e-10
    }
    pub fn alpha_ok(&self) -> bool {
        self.alpha_consistency <= 1e-8
    }
    pub fn ineq_ok(&self) -> bool {
        self.ineq_first > 0.0 && self.ineq_second > 0.0
    }
    pub fn xi_ok(&self) -> bool {
        self.xi_identity <= 1e-10 && self.xi3_closed_form <= 1e-10
    }
    pub fn psi_ok(&self) -> bool {
        self.psi_identity <= 1e-8
    }
    pub fn parodi_ok(&self) -> bool {
        self.parodi <= 1e-12 && self.gamma1_identity <= 1e-12 && self.gamma2_identity <= 1e-12
    }
    pub fn zeta_ok(&self) -> bool {
        self.zeta_identity <= 1e-10
    }
    /// Every coefficient of the Leslie dissipation is positive.
    pub fn dissipation_coefficients_positive(&self) -> bool {
        self.dissipation.iter().all(|&d| d > 0.0)
    }
    /// The viscous dissipation form is positive definite and `1/gamma_1 > 0`.
    pub fn dissipation_ok(&self) -> bool {
        self.dissipation_form_min > 0.0 && self.dissipation[3] > 0.0
    }
    pub fn all_ok(&self) -> bool {
        self.eq_ok()
            && self.alpha_ok()
            && self.ineq_ok()
            && self.xi_ok()
            && self.psi_ok()
            && self.parodi_ok()
            && self.zeta_ok()
            && self.dissipation_ok()
    }
}

/// `xi_1 .. xi_3` from the order parameters.
pub fn xi_coefficients(s2: f64, s4: f64) -> [f64; 3] {
    [
        s4 - s2 * s2,
        2.0 * (s2 - s4) / 7.0,
        2.0 * (s4 / 35.0 - 2.0 * s2 / 21.0 + 1.0 / 15.0),
    ]
}

/// Coefficients of the inverse of `Q_n`, by back substitution.
pub fn psi_coefficients(xi: [f64; 3]) -> [f64; 3] {
    let [x1, x2, x3] = xi;
    let p3 = 1.0 / x3;
    let p2 = -p3 * x2 / (x2 + x3);
    let p1 = -(p2 * (4.0 * x1 / 3.0 + 2.0 * x2 / 3.0) + p3 * x1)
        / (2.0 * x1 / 3.0 + 4.0 * x2 / 3.0 + x3);
    [p1, p2, p3]
}

impl PhaseConstants {
    pub fn new(alpha: f64, l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0) || !(l1 + 2.0 * l2 > 0.0) {
            return Err(Error::Parameter(format!(
                "elastic constants must satisfy L1 > 0 and L1 + 2 L2 > 0 (got L1 = {l1}, L2 = {l2})"
            )));
        }
        let eta = solve_eta(alpha, Branch::Stable)?;
        Self::from_eta(alpha, eta, l1, l2)
    }

    /// Constants at a given critical point `eta` of strength `alpha`.
    pub fn from_eta(alpha: f64, eta: f64, l1: f64, l2: f64) -> Result<Self> {
        let (s, ahat) = axisymmetric_scaled(eta)?;
        let scale = s.exp();
        let a = ahat.map(|x| x * scale);
        let (s2, s4) = s2_s4(&ahat);
        let xi = xi_coefficients(s2, s4);
        let psi = psi_coefficients(xi);
        let zeta = 1.0 / 3.0 + 2.0 / (3.0 * s2) - 2.0 / (s2 * alpha);
        let gamma1 = s2 / zeta;
        let gamma2 = -s2;
        let leslie = [
            -s4 / 2.0,
            -s2 / 2.0 * (1.0 + 1.0 / zeta),
            -s2 / 2.0 * (1.0 - 1.0 / zeta),
            4.0 / 15.0 - 5.0 * s2 / 21.0 - s4 / 35.0,
            s4 / 7.0 + 6.0 * s2 / 7.0,
            s4 / 7.0 - s2 / 7.0,
        ];
        let frank = FrankConstants {
            k1: 2.0 * (l1 + l2) * s2 * s2,
            k2: 2.0 * l1 * s2 * s2,
            k3: 2.0 * (l1 + l2) * s2 * s2,
            k4: l2 * s2 * s2,
        };
        Ok(PhaseConstants {
            alpha,
            l1,
            l2,
            eta,
            a,
            s2,
            s4,
            xi,
            psi,
            leslie,
            gamma1,
            gamma2,
            zeta,
            frank,
        })
    }

    pub fn invariants(&self) -> Result<InvariantReport> {
        let (_, ah) = axisymmetric_scaled(self.eta)?;
        let [a0, a2, a4, _] = ah;
        let l = &self.leslie;
        let g2g1 = self.gamma2 * self.gamma2 / self.gamma1;
        Ok(InvariantReport {
            eq_residual: critical_point_residual(self.eta, self.alpha)?.abs(),
            alpha_consistency: (self.alpha - a0 / (a2 - a4)).abs() / self.alpha,
            ineq_first: (3.0 * a2 * a2 + 2.0 * a0 * a2 - 5.0 * a0 * a4) / (a0 * a0),
            ineq_second: (6.0 * a2 - 5.0 * a4 - a0) / a0,
            xi_identity: (self.xi[1] + self.xi[2] - 1.0 / self.alpha).abs(),
            psi_identity: (self.psi[1] + self.psi[2] - self.alpha).abs(),
            xi3_closed_form: (self.xi[2] - (a4 - 2.0 * a2 + a0) / (4.0 * a0)).abs(),
            parodi: (l[1] + l[2] - (l[5] - l[4])).abs(),
            gamma1_identity: (self.gamma1 - (l[2] - l[1])).abs(),
            gamma2_identity: (self.gamma2 - (l[5] - l[4])).abs(),
            zeta_identity: (self.zeta + self.gamma2 / self.gamma1).abs(),
            dissipation: [l[0] + g2g1, l[3], l[4] + l[5] - g2g1, 1.0 / self.gamma1],
            dissipation_form_min: dissipation_form_min(l[0] + g2g1, l[3], l[4] + l[5] - g2g1),
        })
    }
}

fn dissipation_form_min(c_nn: f64, c_d: f64, c_dn: f64) -> f64 {
    let basis = crate::tensor::q_basis();
    let n = Vec3::z();
    let form = |d: &crate::tensor::Mat3, e: &crate::tensor::Mat3| {
        let dnn = (n.transpose() * d * n)[(0, 0)];
        let enn = (n.transpose() * e * n)[(0, 0)];
        c_nn * dnn * enn + c_d * d.component_mul(e).sum() + c_dn * (d * n).dot(&(e * n))
    };
    let m = nalgebra::Matrix5::from_fn(|a, b| form(&basis[a], &basis[b]));
    nalgebra::SymmetricEigen::new(m).eigenvalues.min()
}

/// Oseen-Frank energy `int E_F(n, grad n)` of a periodic director field on
/// the grid (fields independent of z).
pub fn oseen_frank_energy(n_field: &[Vec3], k: &FrankConstants, grid: &Grid2d) -> Result<f64> {
    if n_field.len() != grid.len() {
        return Err(Error::Parameter(format!(
            "director field has {} points, grid has {}",
            n_field.len(),
            grid.len()
        )));
    }
    if let Some(bad) = n_field.iter().find(|n| (n.norm() - 1.0).abs() > 1e-10) {
        return Err(Error::Parameter(format!(
            "director field must be unit length, found |n| = {}",
            bad.norm()
        )));
    }
    // grad[c][a] = d_a n_c
    let grads: Vec<[Vec<f64>; 3]> = (0..3)
        .map(|c| {
            let comp: Vec<f64> = n_field.iter().map(|n| n[c]).collect();
            grid.gradient(&comp)
        })
        .collect();
    let density: Vec<f64> = (0..grid.len())
        .map(|p| {
            let g = |c: usize, a: usize| grads[c][a][p];
            let n = &n_field[p];
            let div = g(0, 0) + g(1, 1) + g(2, 2);
            let curl = Vec3::new(g(2, 1) - g(1, 2), g(0, 2) - g(2, 0), g(1, 0) - g(0, 1));
            let twist = n.dot(&curl);
            let bend = n.cross(&curl).norm_squared();
            let mut tr = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    tr += g(j, i) * g(i, j);
                }
            }
            0.5 * k.k1 * div * div
                + 0.5 * k.k2 * twist * twist
                + 0.5 * k.k3 * bend
                + 0.5 * (k.k2 + k.k4) * (tr - div * div)
        })
        .collect();
    Ok(grid.integrate(&density))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_root_is_zero() {
        for alpha in [1.0, 5.0, 8.0] {
            assert_eq!(solve_eta(alpha, Branch::Isotropic).unwrap(), 0.0);
            assert!(critical_point_residual(0.0, alpha).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn isotropic_instability_at_seven_and_a_half() {
        // G(eta) ~ (8/15 - 4/alpha) eta^2 near zero.
        let eta = 1e-3;
        let g = critical_point_residual(eta, 7.5).unwrap();
        assert!(g.abs() < 1e-8);
    }

    #[test]
    fn critical_alpha_is_below_isotropic_instability() {
        let (a, e) = alpha_star();
        assert!(a > 6.0 && a < 7.5, "alpha* = {a}");
        assert!(e > 0.0);
    }

    #[test]
    fn branch_absent_below_critical() {
        assert!(matches!(
            solve_eta(6.0, Branch::Stable),
            Err(Error::BranchNotPresent { .. })
        ));
    }

    #[test]
    fn psi_inverts_on_in_space() {
        let xi = xi_coefficients(0.6, 0.3);
        let psi = psi_coefficients(xi);
        assert!(((psi[1] + psi[2]) * (xi[1] + xi[2]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_director_has_zero_energy() {
        let g = Grid2d::new(8).unwrap();
        let n = vec![Vec3::new(0.0, 0.6, 0.8); g.len()];
        let k = FrankConstants {
            k1: 1.0,
            k2: 2.0,
            k3: 3.0,
            k4: 0.5,
        };
        assert_eq!(oseen_frank_energy(&n, &k, &g).unwrap(), 0.0);
        let bad = vec![Vec3::new(0.0, 0.6, 0.9); g.len()];
        assert!(oseen_frank_energy(&bad, &k, &g).is_err());
    }
}
