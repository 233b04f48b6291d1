use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasestab::commands::{cmd_certify, cmd_simulate, cmd_sweep, cmd_synth, CommandOutcome};
use phasestab::config::RunConfig;
use phasestab::Error;

/// RES-CLF synthesis, closed-loop simulation and phase-to-state stability certification.
#[derive(Parser)]
#[command(name = "phasestab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Riccati equation and write the RES-CLF certificate.
    Synth(Common),
    /// Simulate the configured closed loop and write the trajectory.
    Simulate(Common),
    /// Run the stability checks and write the report.
    Certify(Common),
    /// Certify across the epsilon grid and the disturbance amplitude grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override such as `disturbance.amplitude=0.1`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> phasestab::Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            let quoted = serde_json::to_string(&out.to_string_lossy())?;
            overrides.push(format!("output_dir={quoted}"));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::InvalidDims { .. }
            | Error::OutOfRange(_)
            | Error::DimensionMismatch { .. }
            | Error::NotSymmetric(_)
            | Error::NotPositiveDefinite(_)
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> phasestab::Result<CommandOutcome>) =
        match &cli.command {
            Command::Synth(c) => (c, cmd_synth),
            Command::Simulate(c) => (c, cmd_simulate),
            Command::Certify(c) => (c, cmd_certify),
            Command::Sweep(c) => (c, cmd_sweep),
        };
    let outcome = common.load().and_then(|cfg| run(&cfg));
    match outcome {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
