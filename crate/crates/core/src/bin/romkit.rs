use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use romkit::harness::{run, Command, ExperimentConfig};
use romkit::Result;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Reduce,
    Train,
    Estimate,
    Benchmark,
    Report,
}

/// POD reduction, MLP surrogates and reduced-order EKF experiments.
#[derive(Debug, Parser)]
#[command(name = "romkit", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Filter for `estimate`: ekf, pod-ekf, pod-mlp-ekf or all.
    #[arg(long)]
    filter: Option<String>,
    /// Use the small CI profile (2,000 snapshots, 10,000 training pairs).
    #[arg(long)]
    fast: bool,
}

fn execute(cli: &Cli) -> Result<()> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if cli.fast {
        config.apply_fast_profile();
    }
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Reduce => Command::Reduce,
        Cmd::Train => Command::Train,
        Cmd::Estimate => Command::Estimate,
        Cmd::Benchmark => Command::Benchmark,
        Cmd::Report => Command::Report,
    };
    if cli.filter.is_some() && !matches!(command, Command::Estimate) {
        return Err(romkit::RomError::Config("--filter only applies to `estimate`".into()));
    }
    for path in run(command, &config, cli.filter.as_deref())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // one line: category, then the message
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
