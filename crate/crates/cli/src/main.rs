use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rofhp_cli::{parse_scenario, parse_scenario_str, run, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "rofhp", version, about = "Photonic hybrid precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV output.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Base preset: fig3, fig4-se, fig4-ber or massive-mimo.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

fn simulate(
    scenario: Option<PathBuf>,
    preset: Option<String>,
    opts: RunOptions,
) -> Result<Vec<PathBuf>, CliError> {
    let resolved = match (&scenario, &preset) {
        (Some(path), _) => parse_scenario(path, preset.as_deref())?,
        (None, Some(name)) => parse_scenario_str("{}", Some(name))?,
        (None, None) => {
            return Err(CliError::Usage(
                "one of --scenario or --preset is required".into(),
            ))
        }
    };
    run(&resolved, &opts)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Command::Simulate {
        scenario,
        preset,
        seed,
        trials,
        out,
        workers,
    } = cli.command;
    let opts = RunOptions {
        seed,
        trials,
        out,
        workers,
    };
    match simulate(scenario, preset, opts) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rofhp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
