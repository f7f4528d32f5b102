use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maxwell_stefan::cli::{self, Emit, RunConfig};
use maxwell_stefan::weak_form::DEFAULT_CONTINUITY_THRESHOLD;
use maxwell_stefan::Error;

#[derive(Parser)]
#[command(name = "msdiff", version, about = "Maxwell-Stefan diffusion runs, refinement studies and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its outputs.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Outputs to write: state_snapshots, entropy_series, audit_report (default: all).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        emit: Vec<String>,
        /// Scale every applied flux by (1 - F); a planted dissipation defect.
        #[arg(long, value_name = "F")]
        truncate_fluxes: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_CONTINUITY_THRESHOLD)]
        continuity_threshold: f64,
    },
    /// Run the scenario on N, 2N, 4N, ... cells and report observed orders.
    Refine {
        scenario: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_name = "F")]
        truncate_fluxes: Option<f64>,
    },
    /// Re-audit a run directory from its scenario and snapshots.
    Audit {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONTINUITY_THRESHOLD)]
        continuity_threshold: f64,
    },
    /// Friction-matrix and solver property suite.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
}

fn execute(command: Command) -> Result<bool, Error> {
    match command {
        Command::Run {
            scenario,
            out,
            emit,
            truncate_fluxes,
            continuity_threshold,
        } => {
            let mut config = RunConfig::new(scenario, out);
            if !emit.is_empty() {
                config.emit = emit.iter().map(|e| Emit::parse(e)).collect::<Result<_, _>>()?;
            }
            config.flux_truncation = truncate_fluxes;
            config.continuity_threshold = continuity_threshold;
            let outcome = cli::run(&config)?;
            let traj = &outcome.trajectory;
            println!(
                "{} steps, dt {:.6e}, H(0) {:.10e}, sup|r| {:.6e}, uphill {:?}",
                traj.n_steps,
                traj.dt,
                outcome.entropy.initial_entropy(),
                outcome.entropy.sup_abs_residual(),
                traj.uphill
            );
            if let Some(audit) = &outcome.audit {
                println!("audit checks pass: {}", audit.all_checks_pass());
            }
            Ok(true)
        }
        Command::Refine {
            scenario,
            levels,
            out,
            truncate_fluxes,
        } => {
            let mut config = RunConfig::new(scenario, out);
            config.refinement_levels = levels;
            config.flux_truncation = truncate_fluxes;
            let table = cli::refine(&config)?;
            print!("{}", table.to_text());
            Ok(true)
        }
        Command::Audit {
            dir,
            continuity_threshold,
        } => {
            let report = cli::audit_dir(&dir, continuity_threshold)?;
            print!("{}", cli::output::audit_report_json(&report));
            Ok(report.all_checks_pass())
        }
        Command::Fuzz { seed, cases } => {
            let report = cli::run_fuzz(seed, cases)?;
            print!("{}", report.to_text());
            for failure in report.structure.failures.iter().chain(&report.oracle.failures).take(20) {
                eprintln!("{failure}");
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::from(cli::EXIT_OK as u8),
        Ok(false) => ExitCode::from(cli::EXIT_ERROR as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
