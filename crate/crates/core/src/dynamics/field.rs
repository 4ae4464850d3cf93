use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::elastic::{
    apply_symbol, ell_symbol, forward_many, from_basis_fields, inverse_many, locate,
    to_basis_fields,
};
use super::{ModelParams, MAX_HALVINGS};
use crate::closure::{solve_point, ClosureOptions};
use crate::error::{Error, Result};
use crate::quadrature::SphereQuadrature;
use crate::spectral::{Grid2d, Spectrum};
use crate::tensor::{symmetric_eigen, Mat3, QTensor};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fields on the doubly periodic grid. Vectors and tensors carry all three
/// spatial components; nothing depends on `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub n: usize,
    pub t: f64,
    pub q: Vec<QTensor>,
    pub v: [Vec<f64>; 3],
}

impl FieldState {
    pub fn new(n: usize, t: f64, q: Vec<QTensor>, v: [Vec<f64>; 3]) -> Result<Self> {
        let len = n * n;
        if q.len() != len || v.iter().any(|c| c.len() != len) {
            return Err(Error::Parameter(format!(
                "field state arrays must all have {len} entries"
            )));
        }
        Ok(FieldState { n, t, q, v })
    }

    /// Uniform `Q` and zero velocity.
    pub fn uniform(n: usize, q: QTensor) -> Self {
        FieldState {
            n,
            t: 0.0,
            q: vec![q; n * n],
            v: std::array::from_fn(|_| vec![0.0; n * n]),
        }
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.q.len())
            .map(|i| (self.v[0][i].powi(2) + self.v[1][i].powi(2) + self.v[2][i].powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Smallest distance of any eigenvalue to the ends of `(-1/3, 2/3)`.
    pub fn physical_margin(&self) -> f64 {
        self.q
            .par_iter()
            .map(|q| {
                let l = symmetric_eigen(&q.to_matrix()).0;
                (l[0] + 1.0 / 3.0).min(2.0 / 3.0 - l[2])
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    fn checksum(&self) -> f64 {
        let mut s = self.t;
        for (i, q) in self.q.iter().enumerate() {
            let c = q.components();
            s += (i as f64 + 1.0).sqrt() * (c[0] + 2.0 * c[1] + 3.0 * c[2] + 5.0 * c[3] + 7.0 * c[4]);
        }
        for (a, comp) in self.v.iter().enumerate() {
            for (i, x) in comp.iter().enumerate() {
                s += (a as f64 + 1.5) * (i as f64 + 2.0).sqrt() * x;
            }
        }
        s
    }
}

/// Energy and dissipation ledger of one state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `1/2 int |v|^2`.
    pub kinetic: f64,
    /// `int -ln Z + Q:B - alpha |Q|^2 / 2`.
    pub bulk: f64,
    pub elastic: f64,
    /// `kinetic + (1 - gamma)/(Re De) (bulk + elastic)`.
    pub total: f64,
    /// `gamma/Re int |grad v|^2`.
    pub viscous: f64,
    /// `(1 - gamma)/(2 Re) int D : M4 : D`.
    pub closure: f64,
    /// `4 (1 - gamma)/(Re De^2) int mu : M_Q(mu)`.
    pub rotational: f64,
    pub dissipation: f64,
    /// Smallest eigenvalue distance to the ends of `(-1/3, 2/3)`.
    pub min_margin: f64,
}

/// External body forces added to the right-hand sides.
pub trait Forcing: Send + Sync {
    /// Forces at time `t`, on the `Q` equation and the momentum equation.
    fn eval(&self, t: f64, grid: &Grid2d) -> Result<(Vec<QTensor>, [Vec<f64>; 3])>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Polar and azimuthal resolution of the sphere quadrature used by the
    /// closure at every grid point.
    pub quadrature: (usize, usize),
    /// Advective fraction in `dt = min(cfl dx / |v|max, relax De)`.
    pub cfl: f64,
    pub relax: f64,
    /// Multiplier on the isotropic bound `2/15 (1 + 3 |Q|max)` of the
    /// implicitly treated part of `J_Q L`.
    pub cbar_factor: f64,
    /// Second-order multistep; otherwise every step is first order.
    pub use_sbdf2: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            quadrature: (16, 32),
            cfl: 0.25,
            relax: 0.05,
            cbar_factor: 4.0,
            use_sbdf2: true,
        }
    }
}

/// Diagnostics of an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Time step actually taken.
    pub dt: f64,
    pub halvings: usize,
    pub second_order: bool,
    /// Frozen scalar bound of `J_Q` used in the implicit elastic solve.
    pub cbar: f64,
    /// Largest `|k . v_hat|` after projection, relative to the velocity scale.
    pub divergence: f64,
    /// Ledger of the state at the start of the step.
    pub energy: EnergyReport,
}

struct Explicit {
    /// Masked explicit `Q` tendency in basis coordinates, without the
    /// implicit-split add-back.
    nq: [Spectrum; 5],
    /// Masked explicit momentum tendency, before projection.
    nv: [Spectrum; 3],
    energy: EnergyReport,
    qmax: f64,
    warm: Vec<[f64; 3]>,
}

struct History {
    t: f64,
    dt: f64,
    checksum: f64,
    qh: [Spectrum; 5],
    vh: [Spectrum; 3],
    nq: [Spectrum; 5],
    nv: [Spectrum; 3],
}

/// IMEX pseudo-spectral integrator: SBDF2 (BDF1 on the first step and after
/// any rejection) with the Laplacian-type terms implicit and all closure,
/// stress and advective terms explicit.
pub struct FieldSolver {
    pub params: ModelParams,
    pub options: SolverOptions,
    grid: Grid2d,
    quad: SphereQuadrature,
    closure: ClosureOptions,
    /// Eigen decomposition of the elastic symbol per wavevector.
    sym_vecs: Vec<[f64; 25]>,
    sym_vals: Vec<[f64; 5]>,
    warm: Vec<[f64; 3]>,
    history: Option<History>,
    forcing: Option<Box<dyn Forcing>>,
}

impl std::fmt::Debug for FieldSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSolver")
            .field("n", &self.grid.n)
            .field("params", &self.params)
            .field("options", &self.options)
            .finish()
    }
}

impl FieldSolver {
    pub fn new(n: usize, params: ModelParams, options: SolverOptions) -> Result<Self> {
        params.validate()?;
        if !(options.cfl > 0.0 && options.relax > 0.0 && options.cbar_factor >= 1.0) {
            return Err(Error::Parameter(
                "cfl and relax fractions must be positive and cbar_factor at least 1".into(),
            ));
        }
        let grid = Grid2d::new(n)?;
        let quad = SphereQuadrature::new(options.quadrature.0, options.quadrature.1)?;
        let mut sym_vecs = Vec::with_capacity(grid.len());
        let mut sym_vals = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (kx, ky) = grid.k(idx);
            let eig = nalgebra::SymmetricEigen::new(ell_symbol(kx, ky, params.l1, params.l2));
            let mut v = [0.0; 25];
            for a in 0..5 {
                for b in 0..5 {
                    v[a * 5 + b] = eig.eigenvectors[(a, b)];
                }
            }
            sym_vecs.push(v);
            sym_vals.push(std::array::from_fn(|a| eig.eigenvalues[a]));
        }
        Ok(FieldSolver {
            params,
            options,
            closure: ClosureOptions::with_delta(params.monitor_margin()),
            grid,
            quad,
            sym_vecs,
            sym_vals,
            warm: Vec::new(),
            history: None,
            forcing: None,
        })
    }

    pub fn grid(&self) -> &Grid2d {
        &self.grid
    }

    pub fn quadrature(&self) -> &SphereQuadrature {
        &self.quad
    }

    pub fn set_forcing(&mut self, forcing: Option<Box<dyn Forcing>>) {
        self.forcing = forcing;
        self.history = None;
    }

    /// Forget the multistep history so the next step is first order.
    pub fn reset_history(&mut self) {
        self.history = None;
    }

    /// Default step from the advective and relaxation limits.
    pub fn suggested_dt(&self, state: &FieldState) -> f64 {
        let vmax = state.max_speed();
        let relax = self.options.relax * self.params.de;
        if vmax > 0.0 {
            relax.min(self.options.cfl * self.grid.dx() / vmax)
        } else {
            relax
        }
    }

    fn viscosity_split(&self) -> (f64, f64) {
        let p = &self.params;
        let cv = (1.0 - p.gamma) / (6.0 * p.re);
        (p.gamma / p.re + cv, cv)
    }

    fn cbar_coefficient(&self, qmax: f64) -> (f64, f64) {
        let cbar = self.options.cbar_factor * 2.0 / 15.0 * (1.0 + 3.0 * qmax);
        (cbar, 4.0 * self.params.epsilon * cbar / self.params.de)
    }

    fn check_state(&self, state: &FieldState) -> Result<()> {
        if state.n != self.grid.n || state.q.len() != self.grid.len() {
            return Err(Error::Parameter(format!(
                "state grid {} does not match solver grid {}",
                state.n, self.grid.n
            )));
        }
        Ok(())
    }

    fn spectra(&self, state: &FieldState) -> ([Vec<f64>; 5], [Spectrum; 5], [Spectrum; 3]) {
        let y = to_basis_fields(&state.q);
        let mut refs: Vec<&[f64]> = y.iter().map(|c| c.as_slice()).collect();
        refs.extend(state.v.iter().map(|c| c.as_slice()));
        let mut all = forward_many(&self.grid, &refs).into_iter();
        let qh: [Spectrum; 5] = std::array::from_fn(|_| all.next().unwrap());
        let vh: [Spectrum; 3] = std::array::from_fn(|_| all.next().unwrap());
        (y, qh, vh)
    }

    /// Closure solves, pointwise algebra and transforms of every explicit
    /// term at one state, together with its energy ledger.
    fn explicit(
        &self,
        state: &FieldState,
        y: &[Vec<f64>; 5],
        qh: &[Spectrum; 5],
        vh: &[Spectrum; 3],
    ) -> Result<Explicit> {
        let g = &self.grid;
        let p = &self.params;
        let len = g.len();
        let n = g.n;

        let mut dspec: Vec<Spectrum> = Vec::with_capacity(21);
        for axis in 0..2 {
            for c in qh.iter() {
                dspec.push(g.deriv(c, axis));
            }
        }
        for axis in 0..2 {
            for c in vh.iter() {
                dspec.push(g.deriv(c, axis));
            }
        }
        let lh = apply_symbol(g, qh, p.l1, p.l2);
        dspec.extend(lh.iter().cloned());
        let drefs: Vec<&[Complex64]> = dspec.iter().map(|c| c.as_slice()).collect();
        let phys = inverse_many(g, &drefs);
        let dq = |axis: usize, a: usize, i: usize| phys[axis * 5 + a][i];
        let dv = |axis: usize, c: usize, i: usize| phys[10 + axis * 3 + c][i];
        let lq = |a: usize, i: usize| phys[16 + a][i];

        let gamma_c = (1.0 - p.gamma) / p.re;
        let warm = &self.warm;
        let closure = &self.closure;
        let quad = &self.quad;

        struct Point {
            nq: [f64; 5],
            rows: [f64; 6],
            force: [f64; 3],
            bulk: f64,
            grad_v2: f64,
            dm4d: f64,
            mu_m_mu: f64,
            qnorm: f64,
            margin: f64,
            b: [f64; 3],
        }

        let points: Vec<Point> = (0..len)
            .into_par_iter()
            .map(|i| -> Result<Point> {
                let yq: [f64; 5] = std::array::from_fn(|a| y[a][i]);
                let q = QTensor::from_basis(yq);
                let w = warm.get(i).copied();
                let pt = solve_point(&q, closure, quad, w).map_err(|e| locate(e, i, n))?;
                let v = [state.v[0][i], state.v[1][i], state.v[2][i]];
                // kappa_ij = d_j v_i, with d_z = 0.
                let kappa = Mat3::new(
                    dv(0, 0, i), dv(1, 0, i), 0.0,
                    dv(0, 1, i), dv(1, 1, i), 0.0,
                    dv(0, 2, i), dv(1, 2, i), 0.0,
                );
                let d = (kappa + kappa.transpose()) * 0.5;
                let l = QTensor::from_basis(std::array::from_fn(|a| lq(a, i)));
                let mu = pt.b_tensor() - q * p.alpha + l * p.epsilon;
                let mum = mu.to_matrix();
                let m_mu = pt.apply_mq(&mum);
                let relax = QTensor::from_matrix(&m_mu).to_basis();
                let flow = pt.apply_j(&kappa.transpose()).to_basis();
                let mut nq = [0.0; 5];
                for a in 0..5 {
                    let adv = v[0] * dq(0, a, i) + v[1] * dq(1, a, i);
                    nq[a] = -adv - 4.0 / p.de * relax[a] + 2.0 * flow[a];
                }
                let stress = pt.contract_m4(&d) * (0.5 * gamma_c) + m_mu * (2.0 * gamma_c / p.de);
                let rows = [
                    stress[(0, 0)], stress[(0, 1)], stress[(0, 2)],
                    stress[(1, 0)], stress[(1, 1)], stress[(1, 2)],
                ];
                let mub = mu.to_basis();
                let mu_dq = |axis: usize| (0..5).map(|a| mub[a] * dq(axis, a, i)).sum::<f64>();
                // v x omega with omega = curl v.
                let om = [
                    dv(1, 2, i),
                    -dv(0, 2, i),
                    dv(0, 1, i) - dv(1, 0, i),
                ];
                let vxo = [
                    v[1] * om[2] - v[2] * om[1],
                    v[2] * om[0] - v[0] * om[2],
                    v[0] * om[1] - v[1] * om[0],
                ];
                let force = [
                    vxo[0] + gamma_c / p.de * mu_dq(0),
                    vxo[1] + gamma_c / p.de * mu_dq(1),
                    vxo[2],
                ];
                Ok(Point {
                    nq,
                    rows,
                    force,
                    bulk: pt.bulk_density(p.alpha),
                    grad_v2: kappa.norm_squared(),
                    dm4d: pt.m4_quad_form(&d),
                    mu_m_mu: mum.component_mul(&m_mu).sum(),
                    qnorm: q.norm(),
                    margin: (pt.q[0] + 1.0 / 3.0).min(2.0 / 3.0 - pt.q[2]),
                    b: pt.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut fields: Vec<Vec<f64>> = (0..14).map(|_| Vec::with_capacity(len)).collect();
        for pt in &points {
            for a in 0..5 {
                fields[a].push(pt.nq[a]);
            }
            for r in 0..6 {
                fields[5 + r].push(pt.rows[r]);
            }
            for c in 0..3 {
                fields[11 + c].push(pt.force[c]);
            }
        }
        let frefs: Vec<&[f64]> = fields.iter().map(|c| c.as_slice()).collect();
        let mut spec = forward_many(g, &frefs).into_iter();
        let mut nq: [Spectrum; 5] = std::array::from_fn(|_| spec.next().unwrap());
        let rows: Vec<Spectrum> = (0..6).map(|_| spec.next().unwrap()).collect();
        let mut nv: [Spectrum; 3] = std::array::from_fn(|_| spec.next().unwrap());
        let dx_rows: Vec<Spectrum> = rows[0..3].iter().map(|r| g.deriv(r, 0)).collect();
        let dy_rows: Vec<Spectrum> = rows[3..6].iter().map(|r| g.deriv(r, 1)).collect();
        for c in 0..3 {
            for idx in 0..len {
                nv[c][idx] += dx_rows[c][idx] + dy_rows[c][idx];
            }
        }
        for s in nq.iter_mut().chain(nv.iter_mut()) {
            g.dealias(s);
        }

        // Elastic energy by Parseval, consistent with the implicit symbol.
        let scale = g.cell_area() / len as f64;
        let mut fe = 0.0;
        for idx in 0..len {
            let (kx, ky) = g.k(idx);
            let s = ell_symbol(kx, ky, p.l1, p.l2);
            for a in 0..5 {
                for b in 0..5 {
                    fe += (qh[a][idx].conj() * qh[b][idx]).re * s[(a, b)];
                }
            }
        }
        let elastic = 0.5 * p.epsilon * scale * fe;
        let sum = |f: &dyn Fn(&Point) -> f64| g.cell_area() * points.iter().map(f).sum::<f64>();
        let kinetic = 0.5
            * g.cell_area()
            * (0..len)
                .map(|i| state.v[0][i].powi(2) + state.v[1][i].powi(2) + state.v[2][i].powi(2))
                .sum::<f64>();
        let bulk = sum(&|pt| pt.bulk);
        let viscous = p.gamma / p.re * sum(&|pt| pt.grad_v2);
        let closure_d = 0.5 * gamma_c * sum(&|pt| pt.dm4d);
        let rotational = 4.0 * gamma_c / (p.de * p.de) * sum(&|pt| pt.mu_m_mu);
        let energy = EnergyReport {
            t: state.t,
            kinetic,
            bulk,
            elastic,
            total: kinetic + gamma_c / p.de * (bulk + elastic),
            viscous,
            closure: closure_d,
            rotational,
            dissipation: viscous + closure_d + rotational,
            min_margin: points.iter().map(|pt| pt.margin).fold(f64::INFINITY, f64::min),
        };
        Ok(Explicit {
            nq,
            nv,
            energy,
            qmax: points.iter().map(|pt| pt.qnorm).fold(0.0, f64::max),
            warm: points.iter().map(|pt| pt.b).collect(),
        })
    }

    fn project(&self, v: &mut [Spectrum; 3]) {
        for idx in 0..self.grid.len() {
            let (kx, ky) = self.grid.k(idx);
            let k2 = kx * kx + ky * ky;
            if k2 > 0.0 {
                let kv = (v[0][idx] * kx + v[1][idx] * ky) / k2;
                v[0][idx] -= kv * kx;
                v[1][idx] -= kv * ky;
            }
        }
    }

    fn forcing_spectra(&self, t: f64) -> Result<Option<([Spectrum; 5], [Spectrum; 3])>> {
        let Some(f) = &self.forcing else {
            return Ok(None);
        };
        let (fq, fv) = f.eval(t, &self.grid)?;
        if fq.len() != self.grid.len() || fv.iter().any(|c| c.len() != self.grid.len()) {
            return Err(Error::Parameter("forcing has the wrong number of points".into()));
        }
        let y = to_basis_fields(&fq);
        let mut refs: Vec<&[f64]> = y.iter().map(|c| c.as_slice()).collect();
        refs.extend(fv.iter().map(|c| c.as_slice()));
        let mut all = forward_many(&self.grid, &refs).into_iter();
        let fqh: [Spectrum; 5] = std::array::from_fn(|_| all.next().unwrap());
        let mut fvh: [Spectrum; 3] = std::array::from_fn(|_| all.next().unwrap());
        self.project(&mut fvh);
        Ok(Some((fqh, fvh)))
    }

    /// `sum_b S_ab(k) x_b` for one wavevector, via the stored eigen basis.
    fn symbol_apply(&self, idx: usize, x: &[Complex64; 5], f: impl Fn(f64) -> f64) -> [Complex64; 5] {
        let v = &self.sym_vecs[idx];
        let lam = &self.sym_vals[idx];
        let mut c = [ZERO; 5];
        for m in 0..5 {
            let mut s = ZERO;
            for a in 0..5 {
                s += x[a] * v[a * 5 + m];
            }
            c[m] = s * f(lam[m]);
        }
        let mut out = [ZERO; 5];
        for a in 0..5 {
            let mut s = ZERO;
            for m in 0..5 {
                s += c[m] * v[a * 5 + m];
            }
            out[a] = s;
        }
        out
    }

    /// Semi-discrete right-hand side `du/dt` at a state (used to build
    /// manufactured forcings consistent with the discretisation).
    pub fn tendency(&mut self, state: &FieldState) -> Result<(Vec<QTensor>, [Vec<f64>; 3])> {
        self.check_state(state)?;
        let (y, qh, vh) = self.spectra(state);
        let ex = self.explicit(state, &y, &qh, &vh)?;
        let (_, a) = self.cbar_coefficient(ex.qmax);
        let (nu, cv) = self.viscosity_split();
        let g = &self.grid;
        let mut rq: [Spectrum; 5] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        let mut rv: [Spectrum; 3] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        for idx in 0..g.len() {
            let (kx, ky) = g.k(idx);
            let k2 = kx * kx + ky * ky;
            let x: [Complex64; 5] = std::array::from_fn(|b| qh[b][idx]);
            let sx = self.symbol_apply(idx, &x, |l| l);
            let keep = g.retained(idx);
            for b in 0..5 {
                let masked = if keep { ex.nq[b][idx] + sx[b] * a } else { ZERO };
                rq[b][idx] = masked - sx[b] * a;
            }
            for c in 0..3 {
                let masked = if keep { ex.nv[c][idx] + vh[c][idx] * (cv * k2) } else { ZERO };
                rv[c][idx] = masked - vh[c][idx] * (nu * k2);
            }
        }
        self.project(&mut rv);
        let mut refs: Vec<&[Complex64]> = rq.iter().map(|c| c.as_slice()).collect();
        refs.extend(rv.iter().map(|c| c.as_slice()));
        let mut phys = inverse_many(g, &refs).into_iter();
        let yq: [Vec<f64>; 5] = std::array::from_fn(|_| phys.next().unwrap());
        let vq: [Vec<f64>; 3] = std::array::from_fn(|_| phys.next().unwrap());
        self.warm = ex.warm;
        Ok((from_basis_fields(&yq), vq))
    }

    /// Energy ledger of a state.
    pub fn energy(&mut self, state: &FieldState) -> Result<EnergyReport> {
        self.check_state(state)?;
        let (y, qh, vh) = self.spectra(state);
        let ex = self.explicit(state, &y, &qh, &vh)?;
        self.warm = ex.warm;
        Ok(ex.energy)
    }

    /// Pressure (up to a constant) from the explicit forces at a state.
    pub fn pressure(&mut self, state: &FieldState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let (y, qh, vh) = self.spectra(state);
        let ex = self.explicit(state, &y, &qh, &vh)?;
        self.warm = ex.warm;
        let g = &self.grid;
        let ph: Spectrum = (0..g.len())
            .map(|idx| {
                let (kx, ky) = g.k(idx);
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    ZERO
                } else {
                    let kf = ex.nv[0][idx] * kx + ex.nv[1][idx] * ky;
                    Complex64::new(0.0, -1.0) * kf / k2
                }
            })
            .collect();
        let p = g.inverse(&ph);
        // The rotational advection form carries |v|^2/2 into the pressure.
        Ok((0..g.len())
            .map(|i| {
                p[i] - 0.5
                    * (state.v[0][i].powi(2) + state.v[1][i].powi(2) + state.v[2][i].powi(2))
            })
            .collect())
    }

    fn try_step(
        &mut self,
        state: &FieldState,
        dt: f64,
        qh: &[Spectrum; 5],
        vh: &[Spectrum; 3],
        ex: &Explicit,
    ) -> Result<(FieldState, bool, f64, f64)> {
        let g = &self.grid;
        let len = g.len();
        let (cbar, a) = self.cbar_coefficient(ex.qmax);
        let (nu, cv) = self.viscosity_split();
        let hist = self.history.as_ref().filter(|h| {
            self.options.use_sbdf2
                && h.t == state.t
                && h.dt == dt
                && h.checksum == state.checksum()
        });
        let second = hist.is_some();
        let forcing = self.forcing_spectra(state.t + dt)?;
        let c0 = if second { 1.5 / dt } else { 1.0 / dt };

        let mut q_new: [Spectrum; 5] = std::array::from_fn(|_| vec![ZERO; len]);
        let mut v_new: [Spectrum; 3] = std::array::from_fn(|_| vec![ZERO; len]);
        for idx in 0..len {
            let (kx, ky) = g.k(idx);
            let k2 = kx * kx + ky * ky;
            let keep = g.retained(idx);
            let x: [Complex64; 5] = std::array::from_fn(|b| qh[b][idx]);
            let sx = self.symbol_apply(idx, &x, |l| l);
            let mut rhs = [ZERO; 5];
            for b in 0..5 {
                let en = if keep { ex.nq[b][idx] + sx[b] * a } else { ZERO };
                rhs[b] = match hist {
                    Some(_) => x[b] * 4.0 / (2.0 * dt) + en * 2.0,
                    None => x[b] / dt + en,
                };
            }
            if let Some(h) = hist {
                let xp: [Complex64; 5] = std::array::from_fn(|b| h.qh[b][idx]);
                let sxp = self.symbol_apply(idx, &xp, |l| l);
                for b in 0..5 {
                    let ep = if keep { h.nq[b][idx] + sxp[b] * a } else { ZERO };
                    rhs[b] -= xp[b] / (2.0 * dt) + ep;
                }
            }
            if let Some((fq, _)) = &forcing {
                for b in 0..5 {
                    rhs[b] += fq[b][idx];
                }
            }
            let sol = self.symbol_apply(idx, &rhs, |l| 1.0 / (c0 + a * l));
            for b in 0..5 {
                q_new[b][idx] = sol[b];
            }

            for c in 0..3 {
                let en = if keep { ex.nv[c][idx] + vh[c][idx] * (cv * k2) } else { ZERO };
                let mut r = match hist {
                    Some(_) => vh[c][idx] * 4.0 / (2.0 * dt) + en * 2.0,
                    None => vh[c][idx] / dt + en,
                };
                if let Some(h) = hist {
                    let ep = if keep { h.nv[c][idx] + h.vh[c][idx] * (cv * k2) } else { ZERO };
                    r -= h.vh[c][idx] / (2.0 * dt) + ep;
                }
                if let Some((_, fv)) = &forcing {
                    r += fv[c][idx];
                }
                v_new[c][idx] = r / (c0 + nu * k2);
            }
        }
        self.project(&mut v_new);

        let mut vscale = 0.0f64;
        let mut div = 0.0f64;
        for idx in 0..len {
            let (kx, ky) = g.k(idx);
            for c in 0..3 {
                vscale = vscale.max(v_new[c][idx].norm());
            }
            div = div.max((v_new[0][idx] * kx + v_new[1][idx] * ky).norm());
        }
        let divergence = if vscale > 0.0 { div / (vscale * (g.n as f64)) } else { 0.0 };
        if divergence > 1e-10 {
            return Err(Error::Invariant(format!(
                "velocity divergence {divergence:e} after projection"
            )));
        }

        let mut refs: Vec<&[Complex64]> = q_new.iter().map(|c| c.as_slice()).collect();
        refs.extend(v_new.iter().map(|c| c.as_slice()));
        let mut phys = inverse_many(g, &refs).into_iter();
        let yq: [Vec<f64>; 5] = std::array::from_fn(|_| phys.next().unwrap());
        let vq: [Vec<f64>; 3] = std::array::from_fn(|_| phys.next().unwrap());
        let q = from_basis_fields(&yq);
        if q.iter().any(|t| !t.is_finite()) || vq.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("field update"));
        }
        let margin = self.params.monitor_margin();
        let n = g.n;
        if let Some((i, l)) = q
            .par_iter()
            .enumerate()
            .map(|(i, t)| (i, symmetric_eigen(&t.to_matrix()).0))
            .find_first(|(_, l)| l[0] < -1.0 / 3.0 + margin || l[2] > 2.0 / 3.0 - margin)
        {
            return Err(Error::PhysicalityLost {
                ix: i % n,
                iy: i / n,
                eigenvalues: l,
                delta: margin,
            });
        }
        let new_state = FieldState {
            n,
            t: state.t + dt,
            q,
            v: vq,
        };
        Ok((new_state, second, cbar, divergence))
    }

    /// Advance by one step of size `dt`. On loss of physicality the step is
    /// retried from first order with `dt` halved, at most [`MAX_HALVINGS`]
    /// times; the returned info records the step actually taken.
    pub fn step(&mut self, state: &FieldState, dt: f64) -> Result<(FieldState, StepInfo)> {
        self.check_state(state)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let (y, qh, vh) = self.spectra(state);
        let ex = self.explicit(state, &y, &qh, &vh)?;
        let mut h = dt;
        let mut halvings = 0;
        loop {
            match self.try_step(state, h, &qh, &vh, &ex) {
                Ok((next, second, cbar, divergence)) => {
                    let checksum = next.checksum();
                    let energy = ex.energy;
                    self.warm = ex.warm;
                    self.history = Some(History {
                        t: next.t,
                        dt: h,
                        checksum,
                        qh,
                        vh,
                        nq: ex.nq,
                        nv: ex.nv,
                    });
                    return Ok((
                        next,
                        StepInfo {
                            dt: h,
                            halvings,
                            second_order: second,
                            cbar,
                            divergence,
                            energy,
                        },
                    ));
                }
                Err(Error::PhysicalityLost { .. }) | Err(Error::NonFinite(_))
                    if halvings < MAX_HALVINGS =>
                {
                    halvings += 1;
                    h *= 0.5;
                    self.history = None;
                }
                Err(Error::PhysicalityLost { .. }) | Err(Error::NonFinite(_)) => {
                    return Err(Error::StepRejected {
                        halvings,
                        t: state.t,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Energy ledger of a state with the default solver options.
pub fn energy_report(
    state: &FieldState,
    params: &ModelParams,
    quad: (usize, usize),
) -> Result<EnergyReport> {
    let opts = SolverOptions {
        quadrature: quad,
        ..Default::default()
    };
    FieldSolver::new(state.n, *params, opts)?.energy(state)
}
