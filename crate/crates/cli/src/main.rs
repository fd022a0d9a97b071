use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgqed_cli::{parse_scenario_file, predict_scenario, run_file, run_tables, CliError, Format, RunOptions};

#[derive(Parser)]
#[command(name = "wgqed", version, about = "Collective decay of qubit chains coupled to a 1D waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write its tables and manifest.
    Run {
        scenario: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Random seed, overriding the scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a scenario file.
    Validate { scenario: PathBuf },
    /// Print the closed-form predictions for N sites and M excitations.
    Predict {
        #[arg(short = 'N')]
        n: usize,
        #[arg(short = 'M')]
        m: usize,
        #[arg(long, requires = "gamma2")]
        gamma1: Option<f64>,
        #[arg(long, requires = "gamma1")]
        gamma2: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

fn execute(cmd: Cmd) -> Result<String, CliError> {
    match cmd {
        Cmd::Run { scenario, threads, out, format, seed } => {
            let report = run_file(&scenario, &RunOptions { threads, out, format, seed })?;
            let mut s = String::new();
            for p in report.tables.iter().chain([&report.manifest]) {
                s.push_str(&format!("wrote {}\n", p.display()));
            }
            Ok(s)
        }
        Cmd::Validate { scenario } => {
            let s = parse_scenario_file(&scenario)?;
            Ok(format!("{}: ok ({}, hash {})\n", scenario.display(), s.command.name(), s.hash()))
        }
        Cmd::Predict { n, m, gamma1, gamma2, format } => {
            let s = predict_scenario(n, m, gamma1.zip(gamma2))?;
            Ok(run_tables(&s)?.iter().map(|t| t.render(format)).collect())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
