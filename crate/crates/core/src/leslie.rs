//! Ericksen-Leslie director dynamics in homogeneous flow and the small
//! Deborah number comparison against the Q-tensor model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HomState, HomogeneousIntegrator, ModelParams};
use crate::equilibrium::PhaseConstants;
use crate::error::{Error, Result};
use crate::quadrature::SphereQuadrature;
use crate::tensor::{symmetric_eigen, Mat3, QTensor, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectorState {
    pub n: Vec3,
    pub t: f64,
}

fn strain_and_vorticity(kappa: &Mat3) -> (Mat3, Mat3) {
    (
        (kappa + kappa.transpose()) * 0.5,
        (kappa - kappa.transpose()) * 0.5,
    )
}

/// `dn/dt = Omega n + zeta (D n - (nn : D) n)` with `D`, `Omega` the
/// symmetric and antisymmetric parts of `kappa_ij = d v_i / d x_j`.
pub fn director_rhs(n: &Vec3, kappa: &Mat3, constants: &PhaseConstants) -> Vec3 {
    let (d, w) = strain_and_vorticity(kappa);
    let dn = d * n;
    w * n + (dn - n * n.dot(&dn)) * constants.zeta
}

/// `|n x (gamma1 N + gamma2 D n)|` with `N = dn/dt - Omega n`, the residual
/// of the torque balance with zero molecular field.
pub fn torque_residual(n: &Vec3, ndot: &Vec3, kappa: &Mat3, constants: &PhaseConstants) -> f64 {
    let (d, w) = strain_and_vorticity(kappa);
    let big_n = ndot - w * n;
    n.cross(&(big_n * constants.gamma1 + d * n * constants.gamma2))
        .norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeslieAngle {
    /// Stable steady angle to the flow direction in simple shear.
    Aligning(f64),
    Tumbling,
}

pub fn leslie_angle(zeta: f64) -> Result<LeslieAngle> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::Parameter(format!("zeta must be positive, got {zeta}")));
    }
    if zeta >= 1.0 {
        Ok(LeslieAngle::Aligning(0.5 * (1.0 / zeta).acos()))
    } else {
        Ok(LeslieAngle::Tumbling)
    }
}

/// Principal eigenvector of `Q`, with its sign chosen to agree with `prev`.
pub fn extract_director(q: &QTensor, prev: Option<&Vec3>) -> Result<Vec3> {
    let (vals, vecs) = symmetric_eigen(&q.to_matrix());
    let gap = vals[2] - vals[1];
    if !(gap > 1e-8) {
        return Err(Error::DegenerateDirector { gap });
    }
    let mut n: Vec3 = vecs.column(2).into_owned().normalize();
    if let Some(p) = prev {
        if n.dot(p) < 0.0 {
            n = -n;
        }
    }
    Ok(n)
}

/// Angle between two directors modulo `n -> -n`.
pub fn director_angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

/// RK4 with renormalisation after every step; returns the trajectory
/// including the initial state.
pub fn integrate_director(
    n0: &Vec3,
    kappa: &Mat3,
    constants: &PhaseConstants,
    dt: f64,
    steps: usize,
) -> Result<Vec<DirectorState>> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let norm = n0.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Parameter("initial director must be nonzero".into()));
    }
    let f = |n: &Vec3| director_rhs(n, kappa, constants);
    let mut n = n0 / norm;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(DirectorState { n, t: 0.0 });
    for k in 0..steps {
        let k1 = f(&n);
        let k2 = f(&(n + k1 * (0.5 * dt)));
        let k3 = f(&(n + k2 * (0.5 * dt)));
        let k4 = f(&(n + k3 * dt));
        n = (n + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)).normalize();
        out.push(DirectorState {
            n,
            t: (k + 1) as f64 * dt,
        });
    }
    Ok(out)
}

/// Simple shear `v = (shear * y, 0, 0)`.
pub fn simple_shear(rate: f64) -> Mat3 {
    let mut k = Mat3::zeros();
    k[(0, 1)] = rate;
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallDeConfig {
    pub alpha: f64,
    pub de_list: Vec<f64>,
    pub shear_rate: f64,
    pub t_final: f64,
    /// Initial director angle to the flow direction, in the shear plane.
    pub theta0: f64,
    /// Time step as a fraction of De.
    pub dt_fraction: f64,
    pub quadrature: (usize, usize),
}

impl Default for SmallDeConfig {
    fn default() -> Self {
        SmallDeConfig {
            alpha: 7.0,
            de_list: vec![0.2, 0.1, 0.05, 0.025],
            shear_rate: 1.0,
            t_final: 5.0,
            theta0: std::f64::consts::FRAC_PI_2,
            dt_fraction: 0.05,
            quadrature: SphereQuadrature::DEFAULT_RESOLUTION,
        }
    }
}

/// JSON has no NaN; failed or undefined entries are written as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "De")]
    pub de: f64,
    #[serde(deserialize_with = "nan_as_null::deserialize")]
    pub sup_angle_err: f64,
    #[serde(deserialize_with = "nan_as_null::deserialize")]
    pub sup_biaxiality: f64,
    /// Least-squares log-log slope over this and all previous rows.
    #[serde(deserialize_with = "nan_as_null::deserialize")]
    pub fitted_slope_running: f64,
    /// Largest torque-balance residual along the Leslie trajectory.
    #[serde(deserialize_with = "nan_as_null::deserialize")]
    pub torque_residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub alpha: f64,
    pub zeta: f64,
    pub leslie_angle: Option<f64>,
    pub rows: Vec<ConvergenceRow>,
    #[serde(deserialize_with = "nan_as_null::deserialize")]
    pub fitted_slope: f64,
}

#[derive(Serialize)]
struct CsvRow {
    #[serde(rename = "De")]
    de: f64,
    sup_angle_err: f64,
    sup_biaxiality: f64,
    fitted_slope_running: f64,
}

/// Least-squares slope of `ln y` against `ln x`; NaN with fewer than two
/// usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

struct RowResult {
    sup_angle_err: f64,
    sup_biaxiality: f64,
    torque_residual: f64,
}

fn run_row(
    de: f64,
    cfg: &SmallDeConfig,
    constants: &PhaseConstants,
    quad: &SphereQuadrature,
) -> Result<RowResult> {
    let params = ModelParams {
        alpha: cfg.alpha,
        de,
        ..ModelParams::default()
    };
    let kappa = simple_shear(cfg.shear_rate);
    let steps = (cfg.t_final / (cfg.dt_fraction * de)).ceil().max(1.0) as usize;
    let dt = cfg.t_final / steps as f64;
    let n0 = Vec3::new(cfg.theta0.cos(), cfg.theta0.sin(), 0.0);
    let leslie = integrate_director(&n0, &kappa, constants, dt, steps)?;
    let mut torque: f64 = 0.0;
    for s in &leslie {
        let ndot = director_rhs(&s.n, &kappa, constants);
        torque = torque.max(torque_residual(&s.n, &ndot, &kappa, constants));
    }

    let mut integ = HomogeneousIntegrator::new(params, quad)?;
    let mut state = HomState::new(QTensor::uniaxial(constants.s2, &n0), kappa, 0.0)?;
    let mut prev = n0;
    let mut sup_err: f64 = 0.0;
    let mut sup_biax: f64 = 0.0;
    for s in leslie.iter().skip(1) {
        state = integ.step(&state, dt)?;
        let n = extract_director(&state.q, Some(&prev))?;
        prev = n;
        sup_err = sup_err.max(director_angle(&n, &s.n));
        sup_biax = sup_biax.max(state.q.biaxiality());
    }
    Ok(RowResult {
        sup_angle_err: sup_err,
        sup_biaxiality: sup_biax,
        torque_residual: torque,
    })
}

/// Compare the Q-tensor model with the Leslie director ODE for each De.
pub fn small_de_experiment(cfg: &SmallDeConfig) -> Result<ConvergenceTable> {
    if cfg.de_list.is_empty() {
        return Err(Error::Parameter("De list is empty".into()));
    }
    if cfg.de_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter("De list must be strictly decreasing".into()));
    }
    if cfg.de_list.iter().any(|&d| !(d > 0.0 && d < 0.5)) {
        return Err(Error::Parameter("every De must lie in (0, 0.5)".into()));
    }
    if !(cfg.t_final > 0.0 && cfg.dt_fraction > 0.0 && cfg.dt_fraction <= 1.0) {
        return Err(Error::Parameter(
            "t_final must be positive and dt_fraction in (0, 1]".into(),
        ));
    }
    let constants = PhaseConstants::new(cfg.alpha, 1.0, 0.5)?;
    let quad = SphereQuadrature::new(cfg.quadrature.0, cfg.quadrature.1)?;
    let results: Vec<Result<RowResult>> = cfg
        .de_list
        .par_iter()
        .map(|&de| run_row(de, cfg, &constants, &quad))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut pts = Vec::new();
    for (&de, r) in cfg.de_list.iter().zip(results) {
        match r {
            Ok(r) => {
                pts.push((de, r.sup_angle_err));
                rows.push(ConvergenceRow {
                    de,
                    sup_angle_err: r.sup_angle_err,
                    sup_biaxiality: r.sup_biaxiality,
                    fitted_slope_running: loglog_slope(&pts),
                    torque_residual: r.torque_residual,
                    error: None,
                });
            }
            Err(e) => rows.push(ConvergenceRow {
                de,
                sup_angle_err: f64::NAN,
                sup_biaxiality: f64::NAN,
                fitted_slope_running: loglog_slope(&pts),
                torque_residual: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    let leslie = match leslie_angle(constants.zeta)? {
        LeslieAngle::Aligning(t) => Some(t),
        LeslieAngle::Tumbling => None,
    };
    Ok(ConvergenceTable {
        alpha: cfg.alpha,
        zeta: constants.zeta,
        leslie_angle: leslie,
        fitted_slope: loglog_slope(&pts),
        rows,
    })
}

impl ConvergenceTable {
    /// CSV with floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut rows = Ok(());
        for r in &self.rows {
            if rows.is_ok() {
                rows = w.serialize(CsvRow {
                    de: r.de,
                    sup_angle_err: r.sup_angle_err,
                    sup_biaxiality: r.sup_biaxiality,
                    fitted_slope_running: r.fitted_slope_running,
                });
            }
        }
        if self.rows.is_empty() {
            rows = w.write_record(["De", "sup_angle_err", "sup_biaxiality", "fitted_slope_running"]);
        }
        rows.expect("writing CSV to memory cannot fail");
        let bytes = w.into_inner().expect("flushing CSV to memory cannot fail");
        String::from_utf8(bytes).expect("CSV output is UTF-8")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
