//! Strict TOML experiment configuration.
//!
//! Every key is checked against the known schema and every problem is
//! collected, so a single pass reports all mistakes with their key paths.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dynamics::ModelParams;
use crate::quadrature::SphereQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PhaseTable,
    ClosureValidate,
    HomogeneousRun,
    FieldRun,
    SmallDe,
    EnergyAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::PhaseTable,
        ExperimentKind::ClosureValidate,
        ExperimentKind::HomogeneousRun,
        ExperimentKind::FieldRun,
        ExperimentKind::SmallDe,
        ExperimentKind::EnergyAudit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::PhaseTable => "phase-table",
            ExperimentKind::ClosureValidate => "closure-validate",
            ExperimentKind::HomogeneousRun => "homogeneous-run",
            ExperimentKind::FieldRun => "field-run",
            ExperimentKind::SmallDe => "small-de",
            ExperimentKind::EnergyAudit => "energy-audit",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown experiment '{s}', expected one of {}", names.join(", "))
            })
    }
}

/// One configuration problem at a dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeConfig {
    /// Fixed step; the solver's suggested step when absent.
    pub dt: Option<f64>,
    pub steps: usize,
    pub cfl: f64,
    pub relax: f64,
    pub cbar_factor: f64,
    pub sbdf2: bool,
    /// Record the energy ledger every this many steps.
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldConfig {
    pub grid: usize,
    /// Sphere quadrature of the pointwise closure solves.
    pub quadrature: [usize; 2],
    pub init_speed: f64,
    pub init_modes: i32,
    pub snapshot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTableConfig {
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureValidateConfig {
    pub samples: usize,
    pub delta: f64,
    pub tol: f64,
    /// Random test tensors `A` per sample for the `M_Q` identities.
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousConfig {
    pub director: [f64; 3],
    /// Scalar order parameter of the uniaxial initial state; the
    /// equilibrium `S_2(alpha)` when absent.
    pub order: Option<f64>,
    pub kappa: [[f64; 3]; 3],
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallDeSection {
    pub de_list: Vec<f64>,
    pub shear_rate: f64,
    pub t_final: f64,
    pub theta0: f64,
    pub dt_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConfig {
    /// Allowed energy increase per step relative to `|E(0)|`.
    pub monotone_tol: f64,
    /// Allowed relative mismatch between the energy drop and the
    /// time-integrated dissipation.
    pub balance_tol: f64,
}

/// A fully resolved experiment description with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: ModelParams,
    /// Sphere quadrature `[n_polar, n_azimuthal]` for closure work outside
    /// the field solver.
    pub quadrature: [usize; 2],
    pub time: TimeConfig,
    pub field: FieldConfig,
    pub phase_table: PhaseTableConfig,
    pub closure_validate: ClosureValidateConfig,
    pub homogeneous: HomogeneousConfig,
    pub small_de: SmallDeSection,
    pub audit: AuditConfig,
}

/// Values supplied outside the file (command line).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

struct Ctx {
    issues: Vec<ConfigIssue>,
}

impl Ctx {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// A table being read, with its key path and the set of accepted keys.
struct Section<'a> {
    table: Option<&'a Table>,
    path: String,
}

impl<'a> Section<'a> {
    fn root(table: &'a Table) -> Self {
        Section {
            table: Some(table),
            path: String::new(),
        }
    }

    fn sub(&self, key: &str, cx: &mut Ctx) -> Section<'a> {
        let path = join(&self.path, key);
        let table = match self.table.and_then(|t| t.get(key)) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(other) => {
                cx.issue(&path, format!("expected a table, found {}", type_name(other)));
                None
            }
        };
        Section { table, path }
    }

    fn check_keys(&self, allowed: &[&str], cx: &mut Ctx) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !allowed.contains(&key.as_str()) {
                    let hint = allowed
                        .iter()
                        .find(|a| a.eq_ignore_ascii_case(key))
                        .map(|a| format!(" (did you mean '{a}'?)"))
                        .unwrap_or_default();
                    cx.issue(join(&self.path, key), format!("unknown key{hint}"));
                }
            }
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64_opt(&self, key: &str, cx: &mut Ctx) -> Option<f64> {
        let v = self.raw(key)?;
        match as_f64(v) {
            Some(x) => Some(x),
            None => {
                cx.issue(join(&self.path, key), format!("expected a number, found {}", type_name(v)));
                None
            }
        }
    }

    fn f64_or(&self, key: &str, default: f64, cx: &mut Ctx) -> f64 {
        self.f64_opt(key, cx).unwrap_or(default)
    }

    fn f64_required(&self, key: &str, cx: &mut Ctx) -> f64 {
        if self.raw(key).is_none() {
            cx.issue(join(&self.path, key), "missing required key");
            return f64::NAN;
        }
        self.f64_opt(key, cx).unwrap_or(f64::NAN)
    }

    fn int_or(&self, key: &str, default: i64, cx: &mut Ctx) -> i64 {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) => *i,
            Some(v) => {
                cx.issue(join(&self.path, key), format!("expected an integer, found {}", type_name(v)));
                default
            }
        }
    }

    fn count_or(&self, key: &str, default: usize, min: usize, cx: &mut Ctx) -> usize {
        let v = self.int_or(key, default as i64, cx);
        if v < min as i64 {
            cx.issue(join(&self.path, key), format!("must be at least {min}, got {v}"));
            return default;
        }
        v as usize
    }

    fn bool_or(&self, key: &str, default: bool, cx: &mut Ctx) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                cx.issue(join(&self.path, key), format!("expected a boolean, found {}", type_name(v)));
                default
            }
        }
    }

    fn string_opt(&self, key: &str, cx: &mut Ctx) -> Option<String> {
        match self.raw(key)? {
            Value::String(s) => Some(s.clone()),
            v => {
                cx.issue(join(&self.path, key), format!("expected a string, found {}", type_name(v)));
                None
            }
        }
    }

    fn f64_list(&self, key: &str, cx: &mut Ctx) -> Option<Vec<f64>> {
        let path = join(&self.path, key);
        match self.raw(key)? {
            Value::Array(a) => {
                let mut out = Vec::with_capacity(a.len());
                for (i, v) in a.iter().enumerate() {
                    match as_f64(v) {
                        Some(x) => out.push(x),
                        None => {
                            cx.issue(format!("{path}[{i}]"), format!("expected a number, found {}", type_name(v)));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            v => {
                cx.issue(path, format!("expected an array of numbers, found {}", type_name(v)));
                None
            }
        }
    }

    fn f64_array<const N: usize>(&self, key: &str, cx: &mut Ctx) -> Option<[f64; N]> {
        let list = self.f64_list(key, cx)?;
        if list.len() != N {
            cx.issue(join(&self.path, key), format!("expected {N} numbers, found {}", list.len()));
            return None;
        }
        Some(std::array::from_fn(|i| list[i]))
    }

    fn matrix3(&self, key: &str, cx: &mut Ctx) -> Option<[[f64; 3]; 3]> {
        let path = join(&self.path, key);
        let rows = match self.raw(key)? {
            Value::Array(a) if a.len() == 3 => a,
            v => {
                cx.issue(path, format!("expected a 3x3 array of numbers, found {}", type_name(v)));
                return None;
            }
        };
        let mut m = [[0.0; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            let ok = match row {
                Value::Array(r) if r.len() == 3 => r.iter().enumerate().all(|(j, v)| match as_f64(v) {
                    Some(x) => {
                        m[i][j] = x;
                        true
                    }
                    None => false,
                }),
                _ => false,
            };
            if !ok {
                cx.issue(format!("{path}[{i}]"), "expected a row of 3 numbers");
                return None;
            }
        }
        Some(m)
    }
}

fn check_quadrature(q: [usize; 2], path: &str, cx: &mut Ctx) {
    if let Err(e) = SphereQuadrature::new(q[0], q[1]) {
        cx.issue(path, e.to_string());
    }
}

fn positive(x: f64, path: String, cx: &mut Ctx) {
    if !(x > 0.0 && x.is_finite()) {
        cx.issue(path, format!("must be positive, got {x}"));
    }
}

/// Parse and validate a configuration, reporting every problem at once.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigErrors> {
    let root: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            return Err(ConfigErrors(vec![ConfigIssue {
                path: "<file>".into(),
                message: format!("TOML syntax error: {}", e.message().trim()),
            }]))
        }
    };
    let mut cx = Ctx { issues: Vec::new() };
    let top = Section::root(&root);
    top.check_keys(
        &[
            "experiment",
            "seed",
            "output_dir",
            "params",
            "quadrature",
            "time",
            "field",
            "phase_table",
            "closure_validate",
            "homogeneous",
            "small_de",
            "audit",
        ],
        &mut cx,
    );

    let file_kind = match top.string_opt("experiment", &mut cx) {
        Some(s) => match s.parse::<ExperimentKind>() {
            Ok(k) => Some(k),
            Err(e) => {
                cx.issue("experiment", e);
                None
            }
        },
        None => None,
    };
    let experiment = match (file_kind, overrides.experiment) {
        (Some(f), Some(o)) if f != o => {
            cx.issue(
                "experiment",
                format!("file selects '{f}' but the command selects '{o}'"),
            );
            o
        }
        (_, Some(o)) => o,
        (Some(f), None) => f,
        (None, None) => {
            cx.issue("experiment", "missing required key");
            ExperimentKind::PhaseTable
        }
    };

    let seed_raw = top.int_or("seed", 0, &mut cx);
    if seed_raw < 0 {
        cx.issue("seed", format!("must be non-negative, got {seed_raw}"));
    }
    let seed = overrides.seed.unwrap_or(seed_raw.max(0) as u64);
    let output_dir = overrides
        .output_dir
        .clone()
        .or_else(|| top.string_opt("output_dir", &mut cx).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    // Model parameters: alpha and De are required, the rest default.
    let d = ModelParams::default();
    let p = top.sub("params", &mut cx);
    p.check_keys(&["alpha", "epsilon", "De", "Re", "gamma", "L1", "L2", "delta"], &mut cx);
    let params = ModelParams {
        alpha: p.f64_required("alpha", &mut cx),
        epsilon: p.f64_or("epsilon", d.epsilon, &mut cx),
        de: p.f64_required("De", &mut cx),
        re: p.f64_or("Re", d.re, &mut cx),
        gamma: p.f64_or("gamma", d.gamma, &mut cx),
        l1: p.f64_or("L1", d.l1, &mut cx),
        l2: p.f64_or("L2", d.l2, &mut cx),
        delta: p.f64_or("delta", d.delta, &mut cx),
    };
    let missing: Vec<String> = cx.issues.iter().map(|i| i.path.clone()).collect();
    for (key, msg) in params.violations_by_key() {
        let path = join("params", key);
        if !missing.contains(&path) {
            cx.issue(path, msg);
        }
    }

    let q = top.sub("quadrature", &mut cx);
    q.check_keys(&["n_polar", "n_azimuthal"], &mut cx);
    let (dp, da) = SphereQuadrature::DEFAULT_RESOLUTION;
    let quadrature = [
        q.count_or("n_polar", dp, 1, &mut cx),
        q.count_or("n_azimuthal", da, 1, &mut cx),
    ];
    check_quadrature(quadrature, "quadrature", &mut cx);

    let t = top.sub("time", &mut cx);
    t.check_keys(&["dt", "steps", "cfl", "relax", "cbar_factor", "sbdf2", "sample_every"], &mut cx);
    let time = TimeConfig {
        dt: t.f64_opt("dt", &mut cx),
        steps: t.count_or("steps", 200, 1, &mut cx),
        cfl: t.f64_or("cfl", 0.25, &mut cx),
        relax: t.f64_or("relax", 0.05, &mut cx),
        cbar_factor: t.f64_or("cbar_factor", 4.0, &mut cx),
        sbdf2: t.bool_or("sbdf2", true, &mut cx),
        sample_every: t.count_or("sample_every", 1, 1, &mut cx),
    };
    if let Some(dt) = time.dt {
        positive(dt, "time.dt".into(), &mut cx);
    }
    positive(time.cfl, "time.cfl".into(), &mut cx);
    positive(time.relax, "time.relax".into(), &mut cx);
    if !(time.cbar_factor >= 1.0) {
        cx.issue("time.cbar_factor", format!("must be at least 1, got {}", time.cbar_factor));
    }

    let f = top.sub("field", &mut cx);
    f.check_keys(&["grid", "quadrature", "init_speed", "init_modes", "snapshot"], &mut cx);
    let field = FieldConfig {
        grid: f.count_or("grid", 64, 4, &mut cx),
        quadrature: f
            .f64_array::<2>("quadrature", &mut cx)
            .map(|a| [a[0] as usize, a[1] as usize])
            .unwrap_or([16, 32]),
        init_speed: f.f64_or("init_speed", 0.5, &mut cx),
        init_modes: f.int_or("init_modes", 3, &mut cx) as i32,
        snapshot: f.bool_or("snapshot", true, &mut cx),
    };
    if field.grid % 2 != 0 {
        cx.issue("field.grid", format!("must be even, got {}", field.grid));
    }
    check_quadrature(field.quadrature, "field.quadrature", &mut cx);
    if !(field.init_speed >= 0.0) {
        cx.issue("field.init_speed", format!("must be non-negative, got {}", field.init_speed));
    }
    if field.init_modes < 1 {
        cx.issue("field.init_modes", format!("must be at least 1, got {}", field.init_modes));
    }

    let pt = top.sub("phase_table", &mut cx);
    pt.check_keys(&["alphas"], &mut cx);
    let alphas = pt.f64_list("alphas", &mut cx).unwrap_or_else(|| vec![params.alpha]);
    if alphas.is_empty() {
        cx.issue("phase_table.alphas", "must not be empty");
    }
    for (i, a) in alphas.iter().enumerate() {
        if !a.is_finite() && !missing.contains(&"params.alpha".to_string()) {
            cx.issue(format!("phase_table.alphas[{i}]"), format!("must be finite, got {a}"));
        }
    }

    let c = top.sub("closure_validate", &mut cx);
    c.check_keys(&["samples", "delta", "tol", "probes"], &mut cx);
    let closure_validate = ClosureValidateConfig {
        samples: c.count_or("samples", 1000, 1, &mut cx),
        delta: c.f64_or("delta", 0.05, &mut cx),
        tol: c.f64_or("tol", 1e-12, &mut cx),
        probes: c.count_or("probes", 10, 1, &mut cx),
    };
    if !(closure_validate.delta > 0.0 && closure_validate.delta < 1.0 / 3.0) {
        cx.issue("closure_validate.delta", format!("must lie in (0, 1/3), got {}", closure_validate.delta));
    }
    if !(closure_validate.tol >= 1e-13) {
        cx.issue("closure_validate.tol", format!("must be at least 1e-13, got {}", closure_validate.tol));
    }

    let h = top.sub("homogeneous", &mut cx);
    h.check_keys(&["director", "order", "kappa", "t_final", "dt", "sample_every"], &mut cx);
    let mut shear = [[0.0; 3]; 3];
    shear[0][1] = 1.0;
    let homogeneous = HomogeneousConfig {
        director: h.f64_array::<3>("director", &mut cx).unwrap_or([1.0, 0.0, 0.0]),
        order: h.f64_opt("order", &mut cx),
        kappa: h.matrix3("kappa", &mut cx).unwrap_or(shear),
        t_final: h.f64_or("t_final", 5.0, &mut cx),
        dt: h.f64_or("dt", 0.01, &mut cx),
        sample_every: h.count_or("sample_every", 1, 1, &mut cx),
    };
    let dn: f64 = homogeneous.director.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(dn > 0.0 && dn.is_finite()) {
        cx.issue("homogeneous.director", "must be a nonzero finite vector");
    }
    let tr = homogeneous.kappa[0][0] + homogeneous.kappa[1][1] + homogeneous.kappa[2][2];
    if tr.abs() > 1e-12 {
        cx.issue("homogeneous.kappa", format!("must be traceless, trace = {tr}"));
    }
    positive(homogeneous.t_final, "homogeneous.t_final".into(), &mut cx);
    positive(homogeneous.dt, "homogeneous.dt".into(), &mut cx);

    let s = top.sub("small_de", &mut cx);
    s.check_keys(&["de_list", "shear_rate", "t_final", "theta0", "dt_fraction"], &mut cx);
    let small_de = SmallDeSection {
        de_list: s.f64_list("de_list", &mut cx).unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]),
        shear_rate: s.f64_or("shear_rate", 1.0, &mut cx),
        t_final: s.f64_or("t_final", 5.0, &mut cx),
        theta0: s.f64_or("theta0", std::f64::consts::FRAC_PI_2, &mut cx),
        dt_fraction: s.f64_or("dt_fraction", 0.05, &mut cx),
    };
    if small_de.de_list.is_empty() {
        cx.issue("small_de.de_list", "must not be empty");
    }
    if small_de.de_list.windows(2).any(|w| !(w[1] < w[0])) {
        cx.issue("small_de.de_list", "must be strictly decreasing");
    }
    if small_de.de_list.iter().any(|&d| !(d > 0.0 && d < 0.5)) {
        cx.issue("small_de.de_list", "every De must lie in (0, 0.5)");
    }
    positive(small_de.t_final, "small_de.t_final".into(), &mut cx);
    if !(small_de.dt_fraction > 0.0 && small_de.dt_fraction <= 1.0) {
        cx.issue("small_de.dt_fraction", format!("must lie in (0, 1], got {}", small_de.dt_fraction));
    }

    let a = top.sub("audit", &mut cx);
    a.check_keys(&["monotone_tol", "balance_tol"], &mut cx);
    let audit = AuditConfig {
        monotone_tol: a.f64_or("monotone_tol", 1e-10, &mut cx),
        balance_tol: a.f64_or("balance_tol", 0.01, &mut cx),
    };
    if !(audit.monotone_tol >= 0.0) {
        cx.issue("audit.monotone_tol", "must be non-negative");
    }
    positive(audit.balance_tol, "audit.balance_tol".into(), &mut cx);

    if !cx.issues.is_empty() {
        return Err(ConfigErrors(cx.issues));
    }
    Ok(ExperimentConfig {
        experiment,
        seed,
        output_dir,
        params,
        quadrature,
        time,
        field,
        phase_table: PhaseTableConfig { alphas },
        closure_validate,
        homogeneous,
        small_de,
        audit,
    })
}
