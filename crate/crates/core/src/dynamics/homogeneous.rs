use super::ModelParams;
use crate::closure::{solve_point, ClosureOptions, ClosurePoint};
use crate::error::{Error, Result};
use crate::quadrature::SphereQuadrature;
use crate::tensor::{Mat3, QTensor};

/// Maximum number of successive dt halvings before a step is abandoned.
pub const MAX_HALVINGS: usize = 10;

/// Spatially homogeneous state under an imposed velocity gradient
/// `kappa_ij = d v_i / d x_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomState {
    pub q: QTensor,
    pub kappa: Mat3,
    pub t: f64,
}

impl HomState {
    pub fn new(q: QTensor, kappa: Mat3, t: f64) -> Result<Self> {
        if !q.is_finite() || kappa.iter().any(|x| !x.is_finite()) || !t.is_finite() {
            return Err(Error::NonFinite("homogeneous state"));
        }
        let tr = kappa.trace();
        if tr.abs() > 1e-12 * (1.0 + kappa.norm()) {
            return Err(Error::Parameter(format!(
                "velocity gradient must be traceless, trace = {tr}"
            )));
        }
        Ok(HomState { q, kappa, t })
    }

    /// Rate of strain `D = (kappa + kappa^T) / 2`.
    pub fn d(&self) -> Mat3 {
        (self.kappa + self.kappa.transpose()) * 0.5
    }

    /// Vorticity tensor `Omega = (kappa - kappa^T) / 2`.
    pub fn omega(&self) -> Mat3 {
        (self.kappa - self.kappa.transpose()) * 0.5
    }
}

/// `-(2/De)(M(mu) + M(mu)^T) + M(kappa^T) + M(kappa^T)^T` with
/// `mu = B_Q - alpha Q`, from a solved closure point.
fn rhs_from_point(p: &ClosurePoint, kappa: &Mat3, params: &ModelParams) -> QTensor {
    let q = p.q_tensor();
    let mu = p.b_tensor() - q * params.alpha;
    let relax = p.apply_j(&mu.to_matrix());
    let flow = p.apply_j(&kappa.transpose());
    relax * (-4.0 / params.de) + flow * 2.0
}

pub fn homogeneous_rhs(
    state: &HomState,
    params: &ModelParams,
    quad: &SphereQuadrature,
) -> Result<QTensor> {
    let opts = ClosureOptions::with_delta(params.monitor_margin());
    let p = solve_point(&state.q, &opts, quad, None)?;
    Ok(rhs_from_point(&p, &state.kappa, params))
}

/// Classical RK4 integrator for the homogeneous system with closure warm
/// starts and step rejection on loss of physicality.
#[derive(Debug, Clone)]
pub struct HomogeneousIntegrator<'a> {
    pub params: ModelParams,
    quad: &'a SphereQuadrature,
    opts: ClosureOptions,
    warm: Option<[f64; 3]>,
    pub rejected_steps: usize,
    pub closure_solves: usize,
}

impl<'a> HomogeneousIntegrator<'a> {
    pub fn new(params: ModelParams, quad: &'a SphereQuadrature) -> Result<Self> {
        params.validate()?;
        Ok(HomogeneousIntegrator {
            params,
            quad,
            opts: ClosureOptions::with_delta(params.monitor_margin()),
            warm: None,
            rejected_steps: 0,
            closure_solves: 0,
        })
    }

    pub fn rhs(&mut self, q: &QTensor, kappa: &Mat3) -> Result<QTensor> {
        let p = solve_point(q, &self.opts, self.quad, self.warm)?;
        self.closure_solves += 1;
        self.warm = Some(p.b);
        Ok(rhs_from_point(&p, kappa, &self.params))
    }

    fn rk4(&mut self, q: &QTensor, kappa: &Mat3, dt: f64) -> Result<QTensor> {
        let k1 = self.rhs(q, kappa)?;
        let k2 = self.rhs(&(*q + k1 * (0.5 * dt)), kappa)?;
        let k3 = self.rhs(&(*q + k2 * (0.5 * dt)), kappa)?;
        let k4 = self.rhs(&(*q + k3 * dt), kappa)?;
        let out = *q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !out.is_finite() {
            return Err(Error::NonFinite("RK4 update"));
        }
        let margin = self.params.monitor_margin();
        if !out.is_physical(margin) {
            return Err(Error::NonPhysical {
                eigenvalues: out.eigen().values,
                delta: margin,
            });
        }
        Ok(out)
    }

    fn advance(&mut self, q: QTensor, kappa: &Mat3, t: f64, dt: f64, depth: usize) -> Result<QTensor> {
        let saved = self.warm;
        match self.rk4(&q, kappa, dt) {
            Ok(out) => Ok(out),
            Err(Error::NonPhysical { .. }) | Err(Error::NoConvergence { .. }) | Err(Error::NonFinite(_))
                if depth < MAX_HALVINGS =>
            {
                self.rejected_steps += 1;
                self.warm = saved;
                let h = 0.5 * dt;
                let mid = self.advance(q, kappa, t, h, depth + 1)?;
                self.advance(mid, kappa, t + h, h, depth + 1)
            }
            Err(Error::NonPhysical { .. }) | Err(Error::NoConvergence { .. }) | Err(Error::NonFinite(_)) => {
                Err(Error::StepRejected { halvings: depth, t })
            }
            Err(e) => Err(e),
        }
    }

    /// Advance by `dt`, subdividing the step (up to [`MAX_HALVINGS`] levels)
    /// whenever the trajectory leaves the monitored physical set.
    pub fn step(&mut self, state: &HomState, dt: f64) -> Result<HomState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let q = self.advance(state.q, &state.kappa, state.t, dt, 0)?;
        Ok(HomState {
            q,
            kappa: state.kappa,
            t: state.t + dt,
        })
    }
}

/// One RK4 step from a cold closure start.
pub fn step_homogeneous(
    state: &HomState,
    dt: f64,
    params: &ModelParams,
    quad: &SphereQuadrature,
) -> Result<HomState> {
    HomogeneousIntegrator::new(*params, quad)?.step(state, dt)
}
