//! Python bindings for the Q-tensor Bingham-closure library.
//!
//! Tensors cross the boundary as nested lists; structured results come back
//! as plain dicts decoded from the library's JSON representation.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qtensor_core::closure::{self, ClosureOptions};
use qtensor_core::dynamics::{HomState, HomogeneousIntegrator, ModelParams};
use qtensor_core::equilibrium::{self, Branch};
use qtensor_core::harness::{self, ExperimentKind, Overrides};
use qtensor_core::leslie::{self, LeslieAngle, SmallDeConfig};
use qtensor_core::linear_ops::{self, DirectorContext};
use qtensor_core::quadrature::{moments_of, SphereQuadrature};
use qtensor_core::tensor::{self as core_tensor, Mat3, Vec3};
use qtensor_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::NonPhysical { .. } | Error::NonFinite(_) | Error::BranchNotPresent { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py_json<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn mat3(m: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| m[i][j])
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn quad(n_polar: usize, n_azimuthal: usize) -> PyResult<SphereQuadrature> {
    SphereQuadrature::new(n_polar, n_azimuthal).map_err(err)
}

/// Symmetric traceless 3x3 tensor.
#[pyclass(module = "qtensor", frozen)]
#[derive(Clone, Copy)]
struct QTensor {
    inner: core_tensor::QTensor,
}

#[pymethods]
impl QTensor {
    /// Build from the components `(q11, q22, q12, q13, q23)`.
    #[new]
    fn new(components: [f64; 5]) -> PyResult<Self> {
        Ok(QTensor {
            inner: core_tensor::QTensor::from_components(components).map_err(err)?,
        })
    }

    /// Symmetric traceless part of a 3x3 matrix.
    #[staticmethod]
    fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        QTensor {
            inner: core_tensor::QTensor::from_matrix(&mat3(m)),
        }
    }

    /// `s (n n - I/3)`.
    #[staticmethod]
    fn uniaxial(s: f64, n: [f64; 3]) -> PyResult<Self> {
        let v = Vec3::from(n);
        if !(v.norm() > 0.0) {
            return Err(PyValueError::new_err("director must be a nonzero vector"));
        }
        Ok(QTensor {
            inner: core_tensor::QTensor::uniaxial(s, &v),
        })
    }

    #[staticmethod]
    fn zero() -> Self {
        QTensor {
            inner: core_tensor::QTensor::ZERO,
        }
    }

    fn components(&self) -> [f64; 5] {
        self.inner.components()
    }

    fn matrix(&self) -> [[f64; 3]; 3] {
        rows(&self.inner.to_matrix())
    }

    /// Ascending eigenvalues.
    fn eigenvalues(&self) -> [f64; 3] {
        core_tensor::symmetric_eigen(&self.inner.to_matrix()).0
    }

    fn dot(&self, other: &QTensor) -> f64 {
        self.inner.dot(&other.inner)
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn is_physical(&self, delta: f64) -> bool {
        self.inner.is_physical(delta)
    }

    fn biaxiality(&self) -> f64 {
        self.inner.biaxiality()
    }

    /// `R Q R^T` for a rotation matrix `R`.
    fn rotate(&self, r: [[f64; 3]; 3]) -> Self {
        QTensor {
            inner: self.inner.rotate(&mat3(r)),
        }
    }

    fn __add__(&self, o: &QTensor) -> Self {
        QTensor {
            inner: self.inner + o.inner,
        }
    }

    fn __sub__(&self, o: &QTensor) -> Self {
        QTensor {
            inner: self.inner - o.inner,
        }
    }

    fn __mul__(&self, s: f64) -> Self {
        QTensor { inner: self.inner * s }
    }

    fn __rmul__(&self, s: f64) -> Self {
        self.__mul__(s)
    }

    fn __neg__(&self) -> Self {
        QTensor { inner: -self.inner }
    }

    fn __eq__(&self, o: &QTensor) -> bool {
        self.inner == o.inner
    }

    fn __repr__(&self) -> String {
        let c = self.inner.components();
        format!("QTensor([{}, {}, {}, {}, {}])", c[0], c[1], c[2], c[3], c[4])
    }
}

/// Dimensionless model parameters; unspecified values take the defaults.
#[pyclass(module = "qtensor", get_all, set_all)]
#[derive(Clone, Copy)]
struct Params {
    alpha: f64,
    epsilon: f64,
    de: f64,
    re: f64,
    gamma: f64,
    l1: f64,
    l2: f64,
    delta: f64,
}

impl Params {
    fn core(&self) -> ModelParams {
        ModelParams {
            alpha: self.alpha,
            epsilon: self.epsilon,
            de: self.de,
            re: self.re,
            gamma: self.gamma,
            l1: self.l1,
            l2: self.l2,
            delta: self.delta,
        }
    }
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (alpha=None, epsilon=None, de=None, re=None, gamma=None, l1=None, l2=None, delta=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: Option<f64>,
        epsilon: Option<f64>,
        de: Option<f64>,
        re: Option<f64>,
        gamma: Option<f64>,
        l1: Option<f64>,
        l2: Option<f64>,
        delta: Option<f64>,
    ) -> PyResult<Self> {
        let d = ModelParams::default();
        let p = Params {
            alpha: alpha.unwrap_or(d.alpha),
            epsilon: epsilon.unwrap_or(d.epsilon),
            de: de.unwrap_or(d.de),
            re: re.unwrap_or(d.re),
            gamma: gamma.unwrap_or(d.gamma),
            l1: l1.unwrap_or(d.l1),
            l2: l2.unwrap_or(d.l2),
            delta: delta.unwrap_or(d.delta),
        };
        p.core().validate().map_err(err)?;
        Ok(p)
    }

    /// Messages for every violated parameter constraint.
    fn violations(&self) -> Vec<String> {
        self.core().violations()
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(alpha={}, epsilon={}, de={}, re={}, gamma={}, l1={}, l2={}, delta={})",
            self.alpha, self.epsilon, self.de, self.re, self.gamma, self.l1, self.l2, self.delta
        )
    }
}

/// Equilibrium order parameters and the derived Leslie and Frank constants.
#[pyclass(module = "qtensor", frozen)]
struct PhaseConstants {
    inner: equilibrium::PhaseConstants,
}

#[pymethods]
impl PhaseConstants {
    #[new]
    #[pyo3(signature = (alpha, l1=1.0, l2=0.5))]
    fn new(alpha: f64, l1: f64, l2: f64) -> PyResult<Self> {
        Ok(PhaseConstants {
            inner: equilibrium::PhaseConstants::new(alpha, l1, l2).map_err(err)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[getter]
    fn s2(&self) -> f64 {
        self.inner.s2
    }
    #[getter]
    fn s4(&self) -> f64 {
        self.inner.s4
    }
    #[getter]
    fn xi(&self) -> [f64; 3] {
        self.inner.xi
    }
    #[getter]
    fn psi(&self) -> [f64; 3] {
        self.inner.psi
    }
    #[getter]
    fn leslie(&self) -> [f64; 6] {
        self.inner.leslie
    }
    #[getter]
    fn gamma1(&self) -> f64 {
        self.inner.gamma1
    }
    #[getter]
    fn gamma2(&self) -> f64 {
        self.inner.gamma2
    }
    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.zeta
    }
    /// `(k1, k2, k3, k4)`.
    #[getter]
    fn frank(&self) -> [f64; 4] {
        let f = self.inner.frank;
        [f.k1, f.k2, f.k3, f.k4]
    }

    /// Residuals of every identity the constants satisfy.
    fn invariants(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py_json(py, &self.inner.invariants().map_err(err)?)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py_json(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "PhaseConstants(alpha={}, S2={}, zeta={})",
            self.inner.alpha, self.inner.s2, self.inner.zeta
        )
    }
}

/// `(alpha*, eta*)` at which the nematic branch appears.
#[pyfunction]
fn critical_alpha() -> (f64, f64) {
    equilibrium::alpha_star()
}

/// Equilibrium `eta` on the stable (default) or unstable nematic branch.
#[pyfunction]
#[pyo3(signature = (alpha, branch="stable"))]
fn solve_eta(alpha: f64, branch: &str) -> PyResult<f64> {
    let b = match branch {
        "stable" => Branch::Stable,
        "unstable" => Branch::Unstable,
        "isotropic" => Branch::Isotropic,
        other => return Err(PyValueError::new_err(format!("unknown branch '{other}'"))),
    };
    equilibrium::solve_eta(alpha, b).map_err(err)
}

/// Bingham multiplier `B_Q`; returns a dict with `b`, `residual`,
/// `iterations` and `spread`.
#[pyfunction]
#[pyo3(signature = (q, delta=0.05, tol=closure::DEFAULT_TOL, n_polar=64, n_azimuthal=128))]
fn bingham_map(py: Python<'_>, q: &QTensor, delta: f64, tol: f64, n_polar: usize, n_azimuthal: usize) -> PyResult<PyObject> {
    let quad = quad(n_polar, n_azimuthal)?;
    let opts = ClosureOptions {
        delta,
        tol,
        ..Default::default()
    };
    let p = closure::solve_point(&q.inner, &opts, &quad, None).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("b", QTensor { inner: p.b_tensor() }.into_py(py))?;
    d.set_item("residual", p.residual)?;
    d.set_item("iterations", p.iterations)?;
    d.set_item("spread", p.b_spread())?;
    Ok(d.into_any().unbind())
}

/// Traceless second moment `Q(B)` of the Bingham density `exp(m m : B)`.
#[pyfunction]
#[pyo3(signature = (b, n_polar=64, n_azimuthal=128))]
fn moment_map(b: &QTensor, n_polar: usize, n_azimuthal: usize) -> PyResult<QTensor> {
    let quad = quad(n_polar, n_azimuthal)?;
    Ok(QTensor {
        inner: moments_of(&b.inner, &quad).map_err(err)?.q,
    })
}

/// `M_Q(A)` with the Bingham closure at `Q`.
#[pyfunction]
#[pyo3(signature = (q, a, delta=0.05, n_polar=64, n_azimuthal=128))]
fn apply_mq(q: &QTensor, a: [[f64; 3]; 3], delta: f64, n_polar: usize, n_azimuthal: usize) -> PyResult<[[f64; 3]; 3]> {
    let quad = quad(n_polar, n_azimuthal)?;
    let p = closure::solve_point(&q.inner, &ClosureOptions::with_delta(delta), &quad, None).map_err(err)?;
    Ok(rows(&p.apply_mq(&mat3(a))))
}

/// Upper bound on the eigenvalue spread of `B_Q` for margin `delta`.
#[pyfunction]
fn spread_bound(delta: f64) -> PyResult<f64> {
    Ok(closure::spread_bound(delta).map_err(err)?.lambda)
}

/// Linearised bulk operator `H_n` applied to `q` around director `n`.
#[pyfunction]
#[pyo3(signature = (n, q, alpha, l1=1.0, l2=0.5))]
fn apply_hn(n: [f64; 3], q: &QTensor, alpha: f64, l1: f64, l2: f64) -> PyResult<QTensor> {
    let c = equilibrium::PhaseConstants::new(alpha, l1, l2).map_err(err)?;
    let ctx = DirectorContext::new(Vec3::from(n), c, &quad(16, 32)?).map_err(err)?;
    Ok(QTensor {
        inner: linear_ops::apply_hn(&ctx, &q.inner),
    })
}

/// Integrate the homogeneous Q-tensor equation under the velocity gradient
/// `kappa` (`kappa[i][j] = d v_i / d x_j`); returns the states after every
/// step.
#[pyfunction]
#[pyo3(signature = (q, kappa, dt, steps, params=None, n_polar=64, n_azimuthal=128))]
fn homogeneous_run(
    q: &QTensor,
    kappa: [[f64; 3]; 3],
    dt: f64,
    steps: usize,
    params: Option<Params>,
    n_polar: usize,
    n_azimuthal: usize,
) -> PyResult<Vec<QTensor>> {
    let quad = quad(n_polar, n_azimuthal)?;
    let p = params.map(|p| p.core()).unwrap_or_default();
    let mut integ = HomogeneousIntegrator::new(p, &quad).map_err(err)?;
    let mut state = HomState::new(q.inner, mat3(kappa), 0.0).map_err(err)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state = integ.step(&state, dt).map_err(err)?;
        out.push(QTensor { inner: state.q });
    }
    Ok(out)
}

/// Steady shear angle `acos(1/zeta)/2` for flow-aligning materials, `None`
/// when the director tumbles.
#[pyfunction]
fn leslie_angle(zeta: f64) -> PyResult<Option<f64>> {
    Ok(match leslie::leslie_angle(zeta).map_err(err)? {
        LeslieAngle::Aligning(t) => Some(t),
        LeslieAngle::Tumbling => None,
    })
}

/// Small Deborah number convergence table as a dict.
#[pyfunction]
#[pyo3(signature = (alpha=7.0, de_list=None, t_final=5.0, n_polar=64, n_azimuthal=128))]
fn small_de(
    py: Python<'_>,
    alpha: f64,
    de_list: Option<Vec<f64>>,
    t_final: f64,
    n_polar: usize,
    n_azimuthal: usize,
) -> PyResult<PyObject> {
    let d = SmallDeConfig::default();
    let cfg = SmallDeConfig {
        alpha,
        de_list: de_list.unwrap_or(d.de_list.clone()),
        t_final,
        quadrature: (n_polar, n_azimuthal),
        ..d
    };
    let table = py.allow_threads(|| leslie::small_de_experiment(&cfg)).map_err(err)?;
    to_py_json(py, &table)
}

/// Validate a TOML experiment configuration; raises `ValueError` listing
/// every problem.
#[pyfunction]
#[pyo3(signature = (text, experiment=None))]
fn validate_config(py: Python<'_>, text: &str, experiment: Option<&str>) -> PyResult<PyObject> {
    let o = Overrides {
        experiment: experiment
            .map(|e| e.parse::<ExperimentKind>())
            .transpose()
            .map_err(PyValueError::new_err)?,
        ..Default::default()
    };
    let cfg = harness::parse_config(text, &o).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_json(py, &cfg)
}

/// Run an experiment from configuration text and return its manifest.
#[pyfunction]
#[pyo3(signature = (text, experiment=None, output_dir=None, seed=None))]
fn run_experiment(
    py: Python<'_>,
    text: &str,
    experiment: Option<&str>,
    output_dir: Option<std::path::PathBuf>,
    seed: Option<u64>,
) -> PyResult<PyObject> {
    let o = Overrides {
        experiment: experiment
            .map(|e| e.parse::<ExperimentKind>())
            .transpose()
            .map_err(PyValueError::new_err)?,
        seed,
        output_dir,
    };
    let cfg = harness::parse_config(text, &o).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let summary = py
        .allow_threads(|| harness::run_experiment(&cfg, text, true))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py_json(py, &summary.manifest)
}

#[pymodule]
fn qtensor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<QTensor>()?;
    m.add_class::<Params>()?;
    m.add_class::<PhaseConstants>()?;
    m.add_function(wrap_pyfunction!(critical_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(solve_eta, m)?)?;
    m.add_function(wrap_pyfunction!(bingham_map, m)?)?;
    m.add_function(wrap_pyfunction!(moment_map, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mq, m)?)?;
    m.add_function(wrap_pyfunction!(spread_bound, m)?)?;
    m.add_function(wrap_pyfunction!(apply_hn, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_run, m)?)?;
    m.add_function(wrap_pyfunction!(leslie_angle, m)?)?;
    m.add_function(wrap_pyfunction!(small_de, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
