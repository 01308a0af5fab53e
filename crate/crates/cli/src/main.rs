use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmcflow_cli::execute::{EXIT_CONFIG, EXIT_OTHER};
use cmcflow_cli::{execute, parse_config, Command, Options};

#[derive(Parser)]
#[command(name = "cmcflow", version, about = "Volume- and area-preserving mean curvature flow in Schwarzschild space")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run specification
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress messages
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a flow and write series.csv, snapshots and summary.json
    Flow(Common),
    /// Linearized spectrum on a CMC sphere
    Spectrum(Common),
    /// One-shot geometry report for a surface
    Geometry(Common),
    /// Bisect the stability threshold in the perturbation amplitude
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Flow(c) => (Command::Flow, c),
        Cmd::Spectrum(c) => (Command::Spectrum, c),
        Cmd::Geometry(c) => (Command::Geometry, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let spec = match parse_config(&common.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(c) = spec.command {
        if c != command {
            eprintln!(
                "config error: `command` is \"{}\" but the subcommand is \"{}\"",
                c.name(),
                command.name()
            );
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let opts = Options {
        out_override: common.out,
        quiet: common.quiet,
    };
    match execute(&spec, command, &opts) {
        Ok(done) => {
            if !opts.quiet {
                eprintln!("wrote {}", done.out_dir.display());
            }
            ExitCode::from(done.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_OTHER as u8)
        }
    }
}
