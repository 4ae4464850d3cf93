use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::{Cell, OutputDir};
use super::HarnessError;
use crate::closure::{solve_point, spread_bound, ClosureOptions, DEFAULT_MAX_ITER};
use crate::dynamics::{random_smooth_state, snapshot, EnergyReport, FieldSolver, HomState, HomogeneousIntegrator, SolverOptions};
use crate::equilibrium::{InvariantReport, PhaseConstants};
use crate::leslie::{extract_director, leslie_angle, small_de_experiment, LeslieAngle, SmallDeConfig};
use crate::quadrature::{moments_of, SphereQuadrature};
use crate::tensor::{symmetric_eigen, Mat3, QTensor, Vec3};

/// Result of an experiment body: names of failed acceptance checks, empty
/// when everything passed.
pub(crate) type Checks = Vec<String>;

fn num(module: &'static str) -> impl Fn(crate::Error) -> HarnessError {
    move |source| HarnessError::Numerical { module, source }
}

fn quadrature(q: [usize; 2]) -> Result<SphereQuadrature, HarnessError> {
    SphereQuadrature::new(q[0], q[1]).map_err(num("sphere_moments"))
}

fn progress(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

#[derive(Serialize)]
struct PhaseRow {
    constants: PhaseConstants,
    leslie_angle: Option<f64>,
    invariants: InvariantReport,
    checks: PhaseChecks,
}

#[derive(Serialize)]
struct PhaseChecks {
    eq: bool,
    alpha: bool,
    ineq: bool,
    xi: bool,
    psi: bool,
    parodi: bool,
    zeta: bool,
    dissipation: bool,
    all: bool,
}

impl PhaseChecks {
    fn of(r: &InvariantReport) -> Self {
        PhaseChecks {
            eq: r.eq_ok(),
            alpha: r.alpha_ok(),
            ineq: r.ineq_ok(),
            xi: r.xi_ok(),
            psi: r.psi_ok(),
            parodi: r.parodi_ok(),
            zeta: r.zeta_ok(),
            dissipation: r.dissipation_ok(),
            all: r.all_ok(),
        }
    }
}

const PHASE_HEADER: &[&str] = &[
    "alpha", "L1", "L2", "eta", "A0", "A2", "A4", "A6", "S2", "S4", "xi1", "xi2", "xi3", "psi1", "psi2", "psi3",
    "alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6", "gamma1", "gamma2", "zeta", "leslie_angle", "k1",
    "k2", "k3", "k4", "eq_residual", "alpha_consistency", "ineq_first", "ineq_second", "xi_identity",
    "xi3_closed_form", "psi_identity", "parodi", "gamma1_identity", "gamma2_identity", "zeta_identity",
    "dissipation1", "dissipation2", "dissipation3", "dissipation4", "dissipation_form_min", "eq_ok", "alpha_ok",
    "ineq_ok", "xi_ok", "psi_ok", "parodi_ok", "zeta_ok", "dissipation_ok", "all_ok",
];

pub(crate) fn phase_table(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<Checks, HarnessError> {
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut failed = Vec::new();
    for &alpha in &cfg.phase_table.alphas {
        let c = PhaseConstants::new(alpha, cfg.params.l1, cfg.params.l2).map_err(num("equilibrium"))?;
        let inv = c.invariants().map_err(num("equilibrium"))?;
        let angle = match leslie_angle(c.zeta).map_err(num("leslie_ref"))? {
            LeslieAngle::Aligning(t) => Some(t),
            LeslieAngle::Tumbling => None,
        };
        let checks = PhaseChecks::of(&inv);
        progress(quiet, || format!("alpha = {alpha}: S2 = {:.6}, zeta = {:.6}, all invariants {}", c.s2, c.zeta, if checks.all { "pass" } else { "FAIL" }));
        if !checks.all {
            failed.push(format!("phase-table invariants at alpha = {alpha}"));
        }
        let mut row: Vec<Cell> = vec![alpha.into(), c.l1.into(), c.l2.into(), c.eta.into()];
        row.extend(c.a.iter().map(|&x| Cell::F(x)));
        row.extend([c.s2, c.s4].map(Cell::F));
        row.extend(c.xi.iter().chain(&c.psi).chain(&c.leslie).map(|&x| Cell::F(x)));
        row.extend([c.gamma1, c.gamma2, c.zeta, angle.unwrap_or(f64::NAN)].map(Cell::F));
        row.extend([c.frank.k1, c.frank.k2, c.frank.k3, c.frank.k4].map(Cell::F));
        row.extend(
            [
                inv.eq_residual,
                inv.alpha_consistency,
                inv.ineq_first,
                inv.ineq_second,
                inv.xi_identity,
                inv.xi3_closed_form,
                inv.psi_identity,
                inv.parodi,
                inv.gamma1_identity,
                inv.gamma2_identity,
                inv.zeta_identity,
            ]
            .map(Cell::F),
        );
        row.extend(inv.dissipation.iter().map(|&x| Cell::F(x)));
        row.push(inv.dissipation_form_min.into());
        row.extend(
            [
                checks.eq,
                checks.alpha,
                checks.ineq,
                checks.xi,
                checks.psi,
                checks.parodi,
                checks.zeta,
                checks.dissipation,
                checks.all,
            ]
            .map(Cell::B),
        );
        rows.push(row);
        table.push(PhaseRow {
            constants: c,
            leslie_angle: angle,
            invariants: inv,
            checks,
        });
    }
    out.write_csv("phase_table.csv", PHASE_HEADER, &rows)?;
    out.write_json("phase_table.json", &table)?;
    Ok(failed)
}

/// Uniform eigenvalues inside the margin and a uniformly random frame.
pub fn sample_physical_q<R: Rng>(rng: &mut R, delta: f64) -> QTensor {
    let lo = -1.0 / 3.0 + delta;
    let hi = 2.0 / 3.0 - delta;
    let l = loop {
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(lo..hi);
        let c = -a - b;
        if (lo..=hi).contains(&c) {
            break [a, b, c];
        }
    };
    let r = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            let [w, x, y, z] = q.map(|c| c / n);
            break Mat3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            );
        }
    };
    QTensor::from_matrix(&(r * Mat3::from_diagonal(&l.into()) * r.transpose()))
}

fn random_symmetric<R: Rng>(rng: &mut R) -> Mat3 {
    let m = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (m + m.transpose()) * 0.5
}

struct ClosureSample {
    q: QTensor,
    probes: Vec<Mat3>,
}

struct ClosureResult {
    eigenvalues: [f64; 3],
    spread: f64,
    iterations: usize,
    roundtrip: f64,
    mq_identity: f64,
    self_adjoint: f64,
    positivity: f64,
    seconds: f64,
}

#[derive(Serialize)]
struct ClosureSummary {
    samples: usize,
    delta: f64,
    tol: f64,
    quadrature: [usize; 2],
    max_roundtrip: f64,
    max_mq_identity: f64,
    max_self_adjoint_defect: f64,
    min_positivity: f64,
    max_spread: f64,
    spread_bound: f64,
    max_iterations: usize,
    median_solve_seconds: f64,
    total_seconds: f64,
    roundtrip_ok: bool,
    mq_identity_ok: bool,
    self_adjoint_ok: bool,
    positivity_ok: bool,
    spread_ok: bool,
}

fn closure_sample(s: &ClosureSample, opts: &ClosureOptions, quad: &SphereQuadrature) -> crate::Result<ClosureResult> {
    let start = Instant::now();
    let p = solve_point(&s.q, opts, quad, None)?;
    let seconds = start.elapsed().as_secs_f64();
    let b = p.b_tensor();
    let roundtrip = (moments_of(&b, quad)?.q - s.q).norm();
    let mq_identity = (p.apply_mq(&b.to_matrix()) - s.q.to_matrix() * 1.5).norm();
    let mut self_adjoint: f64 = 0.0;
    let mut positivity = f64::INFINITY;
    for pair in s.probes.chunks(2) {
        let (a, c) = (&pair[0], &pair[1]);
        let ma = p.apply_mq(a);
        let mc = p.apply_mq(c);
        self_adjoint = self_adjoint.max((ma.dot(c) - a.dot(&mc)).abs());
        positivity = positivity.min(ma.dot(a)).min(mc.dot(c));
    }
    Ok(ClosureResult {
        eigenvalues: p.q,
        spread: p.b_spread(),
        iterations: p.iterations,
        roundtrip,
        mq_identity,
        self_adjoint,
        positivity,
        seconds,
    })
}

pub(crate) fn closure_validate(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<Checks, HarnessError> {
    let cv = &cfg.closure_validate;
    let quad = quadrature(cfg.quadrature)?;
    let opts = ClosureOptions {
        delta: cv.delta,
        tol: cv.tol,
        max_iter: DEFAULT_MAX_ITER,
    };
    let bound = spread_bound(cv.delta).map_err(num("bingham_closure"))?.lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<ClosureSample> = (0..cv.samples)
        .map(|_| ClosureSample {
            q: sample_physical_q(&mut rng, cv.delta),
            probes: (0..2 * cv.probes).map(|_| random_symmetric(&mut rng)).collect(),
        })
        .collect();
    let start = Instant::now();
    let results: Vec<ClosureResult> = samples
        .par_iter()
        .map(|s| closure_sample(s, &opts, &quad))
        .collect::<crate::Result<_>>()
        .map_err(num("bingham_closure"))?;
    let total_seconds = start.elapsed().as_secs_f64();

    let header = [
        "sample", "lambda1", "lambda2", "lambda3", "roundtrip_residual", "mq_identity", "self_adjoint_defect",
        "min_positivity", "b_spread", "spread_bound", "spread_ok", "iterations",
    ];
    let rows: Vec<Vec<Cell>> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.into(),
                r.eigenvalues[0].into(),
                r.eigenvalues[1].into(),
                r.eigenvalues[2].into(),
                r.roundtrip.into(),
                r.mq_identity.into(),
                r.self_adjoint.into(),
                r.positivity.into(),
                r.spread.into(),
                bound.into(),
                (r.spread <= bound).into(),
                r.iterations.into(),
            ]
        })
        .collect();
    out.write_csv("closure_samples.csv", &header, &rows)?;

    let max = |f: fn(&ClosureResult) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let mut times: Vec<f64> = results.iter().map(|r| r.seconds).collect();
    times.sort_by(f64::total_cmp);
    let summary = ClosureSummary {
        samples: cv.samples,
        delta: cv.delta,
        tol: cv.tol,
        quadrature: cfg.quadrature,
        max_roundtrip: max(|r| r.roundtrip),
        max_mq_identity: max(|r| r.mq_identity),
        max_self_adjoint_defect: max(|r| r.self_adjoint),
        min_positivity: results.iter().map(|r| r.positivity).fold(f64::INFINITY, f64::min),
        max_spread: max(|r| r.spread),
        spread_bound: bound,
        max_iterations: results.iter().map(|r| r.iterations).max().unwrap_or(0),
        median_solve_seconds: times[times.len() / 2],
        total_seconds,
        roundtrip_ok: false,
        mq_identity_ok: false,
        self_adjoint_ok: false,
        positivity_ok: false,
        spread_ok: false,
    };
    let summary = ClosureSummary {
        roundtrip_ok: summary.max_roundtrip <= 1e-10,
        mq_identity_ok: summary.max_mq_identity <= 1e-8,
        self_adjoint_ok: summary.max_self_adjoint_defect <= 1e-12,
        positivity_ok: summary.min_positivity >= -1e-12,
        spread_ok: summary.max_spread <= bound,
        ..summary
    };
    progress(quiet, || {
        format!(
            "{} samples: max round-trip {:.3e}, max |M_Q(B) - 1.5 Q| {:.3e}, max spread {:.3} (bound {:.3}), median solve {:.1} us",
            summary.samples,
            summary.max_roundtrip,
            summary.max_mq_identity,
            summary.max_spread,
            bound,
            summary.median_solve_seconds * 1e6
        )
    });
    let mut failed = Vec::new();
    for (ok, name) in [
        (summary.roundtrip_ok, "closure round trip"),
        (summary.mq_identity_ok, "M_Q(B) = 3/2 Q identity"),
        (summary.self_adjoint_ok, "M_Q self-adjointness"),
        (summary.positivity_ok, "M_Q positivity"),
        (summary.spread_ok, "B eigenvalue spread bound"),
    ] {
        if !ok {
            failed.push(name.to_string());
        }
    }
    out.write_json("closure_summary.json", &summary)?;
    Ok(failed)
}

#[derive(Serialize)]
struct HomogeneousSummary {
    steps: usize,
    dt: f64,
    t_final: f64,
    initial_order: f64,
    final_q: QTensor,
    final_director: Option<[f64; 3]>,
    final_biaxiality: f64,
    rejected_steps: usize,
    closure_solves: usize,
}

pub(crate) fn homogeneous_run(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<Checks, HarnessError> {
    let h = &cfg.homogeneous;
    let quad = quadrature(cfg.quadrature)?;
    let order = match h.order {
        Some(s) => s,
        None => {
            PhaseConstants::new(cfg.params.alpha, cfg.params.l1, cfg.params.l2)
                .map_err(num("equilibrium"))?
                .s2
        }
    };
    let n0 = Vec3::from(h.director).normalize();
    let kappa = Mat3::from_fn(|i, j| h.kappa[i][j]);
    let mut state = HomState::new(QTensor::uniaxial(order, &n0), kappa, 0.0).map_err(num("dynamics"))?;
    let mut integ = HomogeneousIntegrator::new(cfg.params, &quad).map_err(num("dynamics"))?;
    let steps = (h.t_final / h.dt).ceil().max(1.0) as usize;
    let dt = h.t_final / steps as f64;

    let mut prev_n = n0;
    let mut rows = Vec::new();
    let mut row = |state: &HomState, prev_n: &mut Vec3| {
        let m = state.q.to_matrix();
        let (vals, _) = symmetric_eigen(&m);
        let n = extract_director(&state.q, Some(prev_n)).ok();
        if let Some(n) = n {
            *prev_n = n;
        }
        let n = n.unwrap_or_else(|| Vec3::repeat(f64::NAN));
        rows.push(vec![
            Cell::F(state.t),
            m[(0, 0)].into(),
            m[(0, 1)].into(),
            m[(0, 2)].into(),
            m[(1, 1)].into(),
            m[(1, 2)].into(),
            m[(2, 2)].into(),
            vals[2].into(),
            n.x.into(),
            n.y.into(),
            n.z.into(),
            state.q.biaxiality().into(),
        ]);
    };
    row(&state, &mut prev_n);
    for k in 1..=steps {
        let mut next = integ.step(&state, dt).map_err(num("dynamics"))?;
        next.t = k as f64 * dt;
        state = next;
        if k % h.sample_every == 0 || k == steps {
            row(&state, &mut prev_n);
        }
    }
    let header = [
        "t", "Q_xx", "Q_xy", "Q_xz", "Q_yy", "Q_yz", "Q_zz", "lambda_max", "n_x", "n_y", "n_z", "biaxiality",
    ];
    out.write_csv("homogeneous.csv", &header, &rows)?;
    let summary = HomogeneousSummary {
        steps,
        dt,
        t_final: h.t_final,
        initial_order: order,
        final_q: state.q,
        final_director: extract_director(&state.q, Some(&prev_n)).ok().map(|n| [n.x, n.y, n.z]),
        final_biaxiality: state.q.biaxiality(),
        rejected_steps: integ.rejected_steps,
        closure_solves: integ.closure_solves,
    };
    progress(quiet, || format!("{steps} steps of {dt:.4e}: final biaxiality {:.3e}", summary.final_biaxiality));
    out.write_json("homogeneous_summary.json", &summary)?;
    Ok(Vec::new())
}

/// Ledger of a field run: the energy of every state visited and the step
/// sizes between them.
pub(crate) struct FieldLedger {
    pub energies: Vec<EnergyReport>,
    pub dts: Vec<f64>,
    pub halvings: usize,
    pub max_divergence: f64,
}

#[derive(Serialize)]
struct FieldSummary {
    grid: usize,
    steps: usize,
    dt: f64,
    t_final: f64,
    initial_energy: f64,
    final_energy: f64,
    min_margin: f64,
    halvings: usize,
    max_divergence: f64,
    snapshot: Option<String>,
}

pub(crate) fn field_run(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<FieldLedger, HarnessError> {
    let f = &cfg.field;
    let t = &cfg.time;
    let opts = SolverOptions {
        quadrature: (f.quadrature[0], f.quadrature[1]),
        cfl: t.cfl,
        relax: t.relax,
        cbar_factor: t.cbar_factor,
        use_sbdf2: t.sbdf2,
    };
    let mut solver = FieldSolver::new(f.grid, cfg.params, opts).map_err(num("dynamics"))?;
    let mut state =
        random_smooth_state(f.grid, cfg.seed, cfg.params.delta, f.init_speed, f.init_modes).map_err(num("dynamics"))?;
    let dt = t.dt.unwrap_or_else(|| solver.suggested_dt(&state));
    let mut ledger = FieldLedger {
        energies: Vec::with_capacity(t.steps + 1),
        dts: Vec::with_capacity(t.steps),
        halvings: 0,
        max_divergence: 0.0,
    };
    let mut rows = Vec::new();
    let report = |e: &EnergyReport, step: usize, dt: f64, halvings: usize| -> Vec<Cell> {
        vec![
            step.into(),
            e.t.into(),
            dt.into(),
            e.total.into(),
            e.kinetic.into(),
            e.bulk.into(),
            e.elastic.into(),
            e.viscous.into(),
            e.closure.into(),
            e.rotational.into(),
            e.dissipation.into(),
            e.min_margin.into(),
            halvings.into(),
        ]
    };
    let every = (t.steps / 10).max(1);
    for k in 0..t.steps {
        let (next, info) = solver.step(&state, dt).map_err(num("dynamics"))?;
        ledger.energies.push(info.energy);
        ledger.dts.push(info.dt);
        ledger.halvings += info.halvings;
        ledger.max_divergence = ledger.max_divergence.max(info.divergence);
        if k % t.sample_every == 0 {
            rows.push(report(&info.energy, k, info.dt, info.halvings));
        }
        if k % every == 0 {
            progress(quiet, || {
                format!(
                    "step {k}/{}: t = {:.4}, E = {:.10e}, D = {:.4e}, margin = {:.4}",
                    t.steps, info.energy.t, info.energy.total, info.energy.dissipation, info.energy.min_margin
                )
            });
        }
        state = next;
    }
    let last = solver.energy(&state).map_err(num("dynamics"))?;
    ledger.energies.push(last);
    rows.push(report(&last, t.steps, 0.0, 0));
    let header = [
        "step", "t", "dt", "total", "kinetic", "bulk", "elastic", "viscous", "closure", "rotational", "dissipation",
        "min_margin", "halvings",
    ];
    out.write_csv("energy.csv", &header, &rows)?;

    let snapshot_name = if f.snapshot {
        let name = "final_state.qts";
        snapshot::write(&out.path(name), &state, &cfg.params).map_err(num("dynamics"))?;
        out.register(name)?;
        out.register(&format!("{name}.json"))?;
        Some(name.to_string())
    } else {
        None
    };
    let summary = FieldSummary {
        grid: f.grid,
        steps: t.steps,
        dt,
        t_final: state.t,
        initial_energy: ledger.energies[0].total,
        final_energy: last.total,
        min_margin: ledger.energies.iter().map(|e| e.min_margin).fold(f64::INFINITY, f64::min),
        halvings: ledger.halvings,
        max_divergence: ledger.max_divergence,
        snapshot: snapshot_name,
    };
    out.write_json("field_summary.json", &summary)?;
    Ok(ledger)
}

/// Energy-law checks over a field-run ledger.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyAudit {
    pub steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub energy_drop: f64,
    pub integrated_dissipation: f64,
    pub balance_relative_error: f64,
    /// Largest `E_{k+1} - E_k` relative to `|E_0|`.
    pub max_relative_increase: f64,
    pub increases: usize,
    pub min_margin: f64,
    pub margin_floor: f64,
    pub monotone_ok: bool,
    pub balance_ok: bool,
    pub margin_ok: bool,
}

impl EnergyAudit {
    pub fn passed(&self) -> bool {
        self.monotone_ok && self.balance_ok && self.margin_ok
    }
}

/// Compare the energy drop with the trapezoidal integral of the dissipation.
pub fn audit_energy(
    energies: &[EnergyReport],
    dts: &[f64],
    delta: f64,
    monotone_tol: f64,
    balance_tol: f64,
) -> EnergyAudit {
    let e0 = energies[0].total;
    let scale = e0.abs().max(f64::MIN_POSITIVE);
    let mut integrated = 0.0;
    let mut max_inc = f64::NEG_INFINITY;
    let mut increases = 0;
    for (w, dt) in energies.windows(2).zip(dts) {
        integrated += 0.5 * (w[0].dissipation + w[1].dissipation) * dt;
        let inc = (w[1].total - w[0].total) / scale;
        max_inc = max_inc.max(inc);
        if inc > monotone_tol {
            increases += 1;
        }
    }
    let last = energies[energies.len() - 1].total;
    let drop = e0 - last;
    let rel = ((drop - integrated) / integrated).abs();
    let min_margin = energies.iter().map(|e| e.min_margin).fold(f64::INFINITY, f64::min);
    EnergyAudit {
        steps: dts.len(),
        initial_energy: e0,
        final_energy: last,
        energy_drop: drop,
        integrated_dissipation: integrated,
        balance_relative_error: rel,
        max_relative_increase: max_inc,
        increases,
        min_margin,
        margin_floor: delta / 2.0,
        monotone_ok: increases == 0,
        balance_ok: rel <= balance_tol,
        margin_ok: min_margin >= delta / 2.0,
    }
}

pub(crate) fn energy_audit(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<Checks, HarnessError> {
    let ledger = field_run(cfg, out, quiet)?;
    let audit = audit_energy(
        &ledger.energies,
        &ledger.dts,
        cfg.params.delta,
        cfg.audit.monotone_tol,
        cfg.audit.balance_tol,
    );
    progress(quiet, || {
        format!(
            "energy drop {:.6e}, integrated dissipation {:.6e} (relative mismatch {:.3e}), {} increases, min margin {:.4}",
            audit.energy_drop, audit.integrated_dissipation, audit.balance_relative_error, audit.increases, audit.min_margin
        )
    });
    out.write_json("audit.json", &audit)?;
    let mut failed = Vec::new();
    for (ok, name) in [
        (audit.monotone_ok, "energy non-increasing"),
        (audit.balance_ok, "energy drop matches integrated dissipation"),
        (audit.margin_ok, "physicality margin"),
    ] {
        if !ok {
            failed.push(name.to_string());
        }
    }
    Ok(failed)
}

pub(crate) fn small_de(cfg: &ExperimentConfig, out: &mut OutputDir, quiet: bool) -> Result<Checks, HarnessError> {
    let s = &cfg.small_de;
    let sc = SmallDeConfig {
        alpha: cfg.params.alpha,
        de_list: s.de_list.clone(),
        shear_rate: s.shear_rate,
        t_final: s.t_final,
        theta0: s.theta0,
        dt_fraction: s.dt_fraction,
        quadrature: (cfg.quadrature[0], cfg.quadrature[1]),
    };
    let table = small_de_experiment(&sc).map_err(num("leslie_ref"))?;
    for r in &table.rows {
        progress(quiet, || {
            format!(
                "De = {}: sup angle error {:.4e}, sup biaxiality {:.4e}",
                r.de, r.sup_angle_err, r.sup_biaxiality
            )
        });
    }
    progress(quiet, || format!("fitted slope {:.4}", table.fitted_slope));
    out.write("convergence.csv", table.to_csv().as_bytes())?;
    out.write_json("convergence.json", &table)?;
    Ok(Vec::new())
}
