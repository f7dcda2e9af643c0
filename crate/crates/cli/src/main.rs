use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Exit status for a passing command.
pub const EXIT_PASS: u8 = 0;
/// Exit status for configuration or usage errors.
pub const EXIT_CONFIG: u8 = 1;
/// Exit status for solver failures and failed checks.
pub const EXIT_FAIL: u8 = 2;

/// Overrides the root under which `output.dir` is resolved.
pub const OUTPUT_ROOT_ENV: &str = "KWC_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "kwc",
    version,
    about = "Pseudo-parabolic KWC grain-boundary solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Energy,
    Dependence,
    Comparison,
    Linfty,
    RefineTau,
    RefineEps,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March a configuration to its final time and write ledger and snapshots.
    Run { config: PathBuf },
    /// Run one verification experiment and report PASS or FAIL.
    Verify {
        config: PathBuf,
        #[arg(value_enum)]
        experiment: Experiment,
        /// refinement levels for refine-tau / refine-eps
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run the configuration once per value of one key.
    Sweep {
        config: PathBuf,
        /// configuration key, e.g. `scheme.eps`
        #[arg(long)]
        axis: String,
        /// comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Cross-check the step solvers against the dense reference minimizer.
    OracleTest {
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run { config } => commands::cmd_run(&config),
        Command::Verify {
            config,
            experiment,
            levels,
        } => commands::cmd_verify(&config, experiment, levels),
        Command::Sweep {
            config,
            axis,
            values,
            jobs,
        } => commands::cmd_sweep(&config, &axis, &values, jobs),
        Command::OracleTest { size, seed, cases } => commands::cmd_oracle_test(size, seed, cases),
    };
    ExitCode::from(code)
}
