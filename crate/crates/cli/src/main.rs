use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trustnet_cli::{cmd_bounds, cmd_run, cmd_verify, configure_threads, CliError, Options};

/// Trust-aware resilient consensus experiments.
#[derive(Parser)]
#[command(name = "trustnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate each scenario and write metrics.csv and runs.csv.
    Run(Flags),
    /// Evaluate the analytical bounds and assumption checks on the grid.
    Bounds(Flags),
    /// Compare simulated frequencies against the bounds; exit 4 on failure.
    Verify(Flags),
}

#[derive(Args)]
struct Flags {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Only this scenario; all of them when omitted.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory; overrides `out` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides every seed in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs per scenario.
    #[arg(long)]
    runs: Option<usize>,
    /// Also write SVG panels (run only).
    #[arg(long)]
    svg: bool,
    /// Also write per-step traces of the first run (run only).
    #[arg(long)]
    traces: bool,
}

impl From<Flags> for Options {
    fn from(f: Flags) -> Self {
        Options {
            spec: f.spec,
            scenario: f.scenario,
            out: f.out,
            seed: f.seed,
            runs: f.runs,
            svg: f.svg,
            traces: f.traces,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(f) => cmd_run(&f.into()),
        Command::Bounds(f) => cmd_bounds(&f.into()),
        Command::Verify(f) => cmd_verify(&f.into()),
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("trustnet: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &CliError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
