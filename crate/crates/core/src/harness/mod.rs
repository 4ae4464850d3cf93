//! Experiment orchestration behind the `qtensor` command line tool.
//!
//! A run parses a strict TOML configuration, locks the output directory,
//! executes one experiment and finishes with `manifest.json`, which echoes
//! the resolved configuration and lists every output with its SHA-256.

pub mod config;
mod experiments;
pub mod output;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

pub use config::{
    parse_config, ConfigErrors, ConfigIssue, ExperimentConfig, ExperimentKind, Overrides,
};
pub use experiments::{audit_energy, sample_physical_q, EnergyAudit};
pub use output::{FileEntry, OutputDir, LOCK_NAME, MANIFEST_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{0}")]
    Config(ConfigErrors),

    #[error("output directory is in use by another run (lockfile {})", .0.display())]
    Locked(PathBuf),

    #[error("numerical failure in {module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: crate::Error,
    },

    #[error("acceptance checks failed: {}", .0.join("; "))]
    ChecksFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Locked(_) => EXIT_CONFIG,
            HarnessError::Numerical { .. } | HarnessError::ChecksFailed(_) => EXIT_NUMERICAL,
            HarnessError::Io(_) | HarnessError::Json(_) => EXIT_IO,
        }
    }
}

impl From<ConfigErrors> for HarnessError {
    fn from(e: ConfigErrors) -> Self {
        HarnessError::Config(e)
    }
}

/// Parse a configuration whose experiment kind is given in the file.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config(text, &Overrides::default())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub status: String,
    pub failed_checks: Vec<String>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
}

/// Run one experiment and write its artifacts and manifest.
///
/// Outputs are written even when acceptance checks fail; the failure is
/// then reported as [`HarnessError::ChecksFailed`] after the manifest is in
/// place.
pub fn run_experiment(
    config: &ExperimentConfig,
    config_text: &str,
    quiet: bool,
) -> Result<RunSummary, HarnessError> {
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut out = OutputDir::acquire(&config.output_dir)?;
    let failed = match config.experiment {
        ExperimentKind::PhaseTable => experiments::phase_table(config, &mut out, quiet)?,
        ExperimentKind::ClosureValidate => experiments::closure_validate(config, &mut out, quiet)?,
        ExperimentKind::HomogeneousRun => experiments::homogeneous_run(config, &mut out, quiet)?,
        ExperimentKind::FieldRun => {
            experiments::field_run(config, &mut out, quiet)?;
            Vec::new()
        }
        ExperimentKind::SmallDe => experiments::small_de(config, &mut out, quiet)?,
        ExperimentKind::EnergyAudit => experiments::energy_audit(config, &mut out, quiet)?,
    };
    let manifest = Manifest {
        experiment: config.experiment,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: output::sha256_hex(config_text.as_bytes()),
        config: config.clone(),
        threads: rayon::current_num_threads(),
        started_unix,
        wall_seconds: clock.elapsed().as_secs_f64(),
        status: if failed.is_empty() { "ok".into() } else { "checks-failed".into() },
        failed_checks: failed.clone(),
        files: out.files().to_vec(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    out.write(MANIFEST_NAME, &bytes)?;
    if !failed.is_empty() {
        return Err(HarnessError::ChecksFailed(failed));
    }
    Ok(RunSummary {
        output_dir: config.output_dir.clone(),
        manifest,
    })
}
