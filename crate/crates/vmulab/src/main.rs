//! Batch front-end: one subcommand per pipeline, configured by a TOML file.
//!
//! Exit codes: 0 success, 2 config, 3 domain (mesh/model/audit), 4 solver,
//! 5 diagnostics, 6 io.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vmulab::config::{Command as PipelineCommand, ConfigError, ExperimentConfig};
use vmulab::pipeline::{run, PipelineError};

#[derive(Parser)]
#[command(
    name = "vmulab",
    about = "Finite-element minimization of p-growth elastic energies with regularity diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the audit sampler (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Randomized audits of the quantitative inequalities.
    Audit(Common),
    /// Minimize the configured energy.
    Solve(Common),
    /// Excess-decay tables on the configured balls.
    Excess(Common),
    /// Power-law fits of the V-mass across radii.
    Decay(Common),
    /// Empirical Caccioppoli constants.
    Caccioppoli(Common),
    /// Autonomous comparison solves and energy-gap ratios.
    Compare(Common),
    /// Blow-up linearization experiment.
    Linearize(Common),
    /// Manufactured-solution construction and solve.
    Manufactured(Common),
    /// Discrete singular-set flags.
    Flags(Common),
}

impl CliCommand {
    fn split(self) -> (PipelineCommand, Common) {
        match self {
            CliCommand::Audit(c) => (PipelineCommand::Audit, c),
            CliCommand::Solve(c) => (PipelineCommand::Solve, c),
            CliCommand::Excess(c) => (PipelineCommand::Excess, c),
            CliCommand::Decay(c) => (PipelineCommand::Decay, c),
            CliCommand::Caccioppoli(c) => (PipelineCommand::Caccioppoli, c),
            CliCommand::Compare(c) => (PipelineCommand::Compare, c),
            CliCommand::Linearize(c) => (PipelineCommand::Linearize, c),
            CliCommand::Manufactured(c) => (PipelineCommand::Manufactured, c),
            CliCommand::Flags(c) => (PipelineCommand::Flags, c),
        }
    }
}

fn execute(invoked: PipelineCommand, common: Common) -> Result<(), PipelineError> {
    if let Some(threads) = common.threads {
        // ignore failure if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if cfg.command != invoked {
        return Err(ConfigError::CommandMismatch {
            config: cfg.command.name().to_string(),
            invoked: invoked.name().to_string(),
        }
        .into());
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.output.directory = out.display().to_string();
    }
    let (manifest, dir) = run(&cfg)?;
    println!("wrote {} artifacts to {}", manifest.files.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = cli.command.split();
    match execute(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
