use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qtensor_core::harness::{
    parse_config, run_experiment, ExperimentKind, HarnessError, Overrides, EXIT_CONFIG, EXIT_IO,
};

/// Q-tensor liquid-crystal experiments with the Bingham closure.
#[derive(Parser, Debug)]
#[command(name = "qtensor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for the parallel kernels (defaults to all cores).
    #[arg(long, global = true, env = "QTENSOR_NUM_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium constants and their identities for a list of alpha values.
    PhaseTable(RunArgs),
    /// Bingham closure round trip, operator identities and spread bound.
    ClosureValidate(RunArgs),
    /// Spatially homogeneous Q-tensor run under a constant velocity gradient.
    HomogeneousRun(RunArgs),
    /// Two-dimensional coupled flow and Q-tensor run.
    FieldRun(RunArgs),
    /// Small Deborah number comparison with Ericksen-Leslie director dynamics.
    SmallDe(RunArgs),
    /// Field run followed by the energy dissipation audit.
    EnergyAudit(RunArgs),
    /// Check a configuration and print the resolved settings as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

fn read_config(path: &PathBuf) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<(), (i32, anyhow::Error)> {
    let text = read_config(&args.config).map_err(|e| (EXIT_CONFIG, e))?;
    let overrides = Overrides {
        experiment: Some(kind),
        seed: args.seed,
        output_dir: args.out,
    };
    let config = parse_config(&text, &overrides)
        .map_err(|e| (EXIT_CONFIG, anyhow::Error::new(HarnessError::Config(e))))?;
    match run_experiment(&config, &text, args.quiet) {
        Ok(summary) => {
            if !args.quiet {
                eprintln!(
                    "{} finished in {:.2} s; {} files in {}",
                    kind,
                    summary.manifest.wall_seconds,
                    summary.manifest.files.len() + 1,
                    summary.output_dir.display()
                );
            }
            Ok(())
        }
        Err(e) => Err((e.exit_code(), anyhow::Error::new(e))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_IO as u8);
        }
    }
    let result = match cli.command {
        Command::PhaseTable(a) => run(ExperimentKind::PhaseTable, a),
        Command::ClosureValidate(a) => run(ExperimentKind::ClosureValidate, a),
        Command::HomogeneousRun(a) => run(ExperimentKind::HomogeneousRun, a),
        Command::FieldRun(a) => run(ExperimentKind::FieldRun, a),
        Command::SmallDe(a) => run(ExperimentKind::SmallDe, a),
        Command::EnergyAudit(a) => run(ExperimentKind::EnergyAudit, a),
        Command::Validate { config } => validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn validate(path: &PathBuf) -> Result<(), (i32, anyhow::Error)> {
    let text = read_config(path).map_err(|e| (EXIT_CONFIG, e))?;
    let config = qtensor_core::harness::validate_config(&text)
        .map_err(|e| (EXIT_CONFIG, anyhow::Error::new(HarnessError::Config(e))))?;
    let json = serde_json::to_string_pretty(&config).map_err(|e| (EXIT_IO, e.into()))?;
    println!("{json}");
    Ok(())
}
