//! The `sop` experiment runner.
//!
//! [`run`] parses argv, executes one subcommand inside a rayon pool of the
//! requested size and returns the process exit code.

pub mod args;
mod commands;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use sop_core::Error as CoreError;

use args::{AuditCommand, Cli, Command, MixingCommand, OutputArgs};
use output::{Outcome, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_COMPUTATION: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("computation failed: {0}")]
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) => EXIT_INVALID_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Computation(_) => EXIT_COMPUTATION,
        }
    }

    pub(crate) fn serialize(e: serde_json::Error) -> Self {
        CliError::Computation(format!("serialization: {e}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidGraph(_)
            | CoreError::InvalidAssignment(_)
            | CoreError::FactorOutOfRange { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::InvalidInput(_)
            | CoreError::InvalidParameter { .. }
            | CoreError::NonDecomposableLoss(_)
            | CoreError::EmptyDataset
            | CoreError::InvalidSource(_) => CliError::InvalidConfig(e.to_string()),
            CoreError::EnumerationCap { .. }
            | CoreError::NotAChain
            | CoreError::InsufficientSamples(_)
            | CoreError::AllDegenerate(_) => CliError::Computation(e.to_string()),
        }
    }
}

fn execute(command: &Command) -> Result<(Outcome, &OutputArgs), CliError> {
    use commands::*;
    Ok(match command {
        Command::GenData(a) => (gen_data(a)?, &a.output),
        Command::Train(a) => (train_cmd(a)?, &a.output),
        Command::Bounds(a) => (bounds(a)?, &a.output),
        Command::Audit(c) => match c {
            AuditCommand::Lipschitz(a) => (lipschitz(a)?, &a.output),
            AuditCommand::Dominance(a) => (dominance(a)?, &a.output),
            AuditCommand::StabilitySgd(a) => (stability_sgd(a)?, &a.output),
            AuditCommand::StabilityRrm(a) => (stability_rrm(a)?, &a.output),
            AuditCommand::Gap(a) => (gap(a)?, &a.output),
            AuditCommand::Rademacher(a) => (rademacher(a)?, &a.output),
            AuditCommand::Gradcheck(a) => (gradcheck(a)?, &a.output),
        },
        Command::Mixing(c) => match c {
            MixingCommand::Gen(a) => (mixing_gen(a)?, &a.output),
            MixingCommand::Profile(a) => (mixing_profile(a)?, &a.output),
            MixingCommand::Sweep(a) => (mixing_sweep(a)?, &a.output),
            MixingCommand::Gap(a) => (mixing_gap(a)?, &a.output),
        },
        Command::Report(a) => (report(a)?, &a.output),
    })
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code: 0 pass, 1 a check failed, 2 usage, 3 invalid configuration,
/// 4 missing file or I/O, 5 computation error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_COMPUTATION;
        }
    };
    let name = cli.command.name();
    let result = pool.install(|| {
        let (outcome, out) = execute(&cli.command)?;
        output::emit(name, &outcome, out.out.as_deref(), out.csv.as_deref(), threads)?;
        Ok::<_, CliError>(outcome.verdict)
    });
    match result {
        Ok(Some(Verdict::Fail)) => {
            eprintln!("{name}: FAIL");
            EXIT_CHECK_FAILED
        }
        Ok(Some(Verdict::Pass)) => {
            eprintln!("{name}: PASS");
            EXIT_OK
        }
        Ok(None) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
