use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fockphase::fermi::EngineSelection;
use fockphase_cli::{execute, load_config, Command, Overrides};

#[derive(Parser)]
#[command(name = "fockphase", version, about = "Gaussian-state phases and quadratic-detector Fermi sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Phase by closed form and by integration, with their difference.
    Phase,
    /// Engine against the truncated Fock-space oracle.
    Verify,
    /// Separation sweep of Bob's excitation probability.
    Fermi,
    /// Single-point signal across a cutoff ladder.
    Converge,
}

#[derive(ValueEnum, Clone, Copy)]
enum Engine {
    Dense,
    Lowrank,
    Auto,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        engine: cli.engine.map(|e| match e {
            Engine::Dense => EngineSelection::Dense,
            Engine::Lowrank => EngineSelection::LowRank,
            Engine::Auto => EngineSelection::Auto,
        }),
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    };
    let command = match cli.command {
        Cmd::Phase => Command::Phase,
        Cmd::Verify => Command::Verify,
        Cmd::Fermi => Command::Fermi,
        Cmd::Converge => Command::Converge,
    };
    let result = load_config(cli.config.as_deref(), &overrides).and_then(|cfg| execute(command, &cfg));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
