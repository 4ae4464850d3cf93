//! Time integration of the Q-tensor system: a spatially homogeneous ODE under
//! an imposed velocity gradient and a doubly periodic pseudo-spectral field
//! solver.

mod elastic;
mod field;
mod homogeneous;
mod init;
pub mod snapshot;

pub use elastic::{distortion_stress, elastic_energy, ell_operator, ell_symbol, mu_q};
pub use field::{
    energy_report, EnergyReport, FieldSolver, FieldState, Forcing, SolverOptions, StepInfo,
};
pub use init::random_smooth_state;
pub use homogeneous::{
    homogeneous_rhs, step_homogeneous, HomState, HomogeneousIntegrator, MAX_HALVINGS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensionless model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(rename = "De")]
    pub de: f64,
    #[serde(rename = "Re")]
    pub re: f64,
    pub gamma: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    /// Physicality margin of the initial data; solutions are monitored with
    /// margin `delta / 2`.
    pub delta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 8.0,
            epsilon: 0.02,
            de: 1.0,
            re: 1.0,
            gamma: 0.5,
            l1: 1.0,
            l2: 0.5,
            delta: 0.1,
        }
    }
}

impl ModelParams {
    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        self.violations_by_key().into_iter().map(|(_, m)| m).collect()
    }

    /// Every violated invariant together with the name of the offending
    /// parameter.
    pub fn violations_by_key(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let finite = [
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("De", self.de),
            ("Re", self.re),
            ("gamma", self.gamma),
            ("L1", self.l1),
            ("L2", self.l2),
            ("delta", self.delta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                out.push((name, format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(("gamma", format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.l1 > 0.0) {
            out.push(("L1", format!("L1 must be positive, got {}", self.l1)));
        }
        if !(self.l1 + 2.0 * self.l2 > 0.0) {
            out.push((
                "L2",
                format!("L1 + 2 L2 must be positive, got {}", self.l1 + 2.0 * self.l2),
            ));
        }
        if !(self.de > 0.0) {
            out.push(("De", format!("De must be positive, got {}", self.de)));
        }
        if !(self.re > 0.0) {
            out.push(("Re", format!("Re must be positive, got {}", self.re)));
        }
        if !(self.epsilon > 0.0) {
            out.push(("epsilon", format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / 3.0) {
            out.push(("delta", format!("delta must lie in (0, 1/3), got {}", self.delta)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(v.join("; ")))
        }
    }

    /// Margin enforced along trajectories.
    pub fn monitor_margin(&self) -> f64 {
        0.5 * self.delta
    }
}
