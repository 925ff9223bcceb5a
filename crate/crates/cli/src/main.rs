use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use omdlab::config::SEED_ENV;
use omdlab::output::{report, write_outputs};
use omdlab::{preset, run, CliError, Scenario, PRESETS};

#[derive(Parser)]
#[command(name = "omdlab", version, about = "Run inexact online mirror descent scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Output root; files go to DIR/<scenario name>/.
        #[arg(long, value_name = "DIR", default_value = "omdlab-out")]
        out: PathBuf,
        /// Worker threads (1 runs sequentially).
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
    },
    /// Run a built-in scenario.
    Preset {
        name: String,
        #[arg(long, value_name = "DIR", default_value = "omdlab-out")]
        out: PathBuf,
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
    },
    /// List the built-in scenarios.
    ListPresets,
}

fn load(path: &PathBuf) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Scenario::parse(&text)
}

fn execute(mut scenario: Scenario, out: PathBuf, jobs: Option<u16>) -> Result<bool, CliError> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        scenario.override_seeds(&v)?;
    }
    let outcome = run(&scenario, jobs.map(usize::from))?;
    let dir = out.join(&scenario.name);
    write_outputs(&outcome, &dir)?;
    print!("{}", report(&outcome));
    println!("outputs in {}", dir.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.cmd {
        Cmd::ListPresets => {
            for (name, about) in PRESETS {
                println!("{name:<14} {about}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Run { config, out, jobs } => load(&config).and_then(|s| execute(s, out, jobs)),
        Cmd::Preset { name, out, jobs } => preset(&name).and_then(|s| execute(s, out, jobs)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
