//! Library surface of the `atnaudit` binary, exposed so integration tests
//! can drive the commands in-process.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod svg;

use args::{Command, Parsed};
use error::CliError;

/// Parse and run one invocation. `argv` excludes the program name.
pub fn run(argv: Vec<String>) -> Result<(), CliError> {
    let Parsed { command, threads } = args::parse(argv)?;
    commands::set_threads(threads)?;
    match command {
        Command::Help => {
            print!("{}", args::USAGE);
            Ok(())
        }
        Command::Prepare(opts) => commands::cmd_prepare(&opts),
        Command::Train(opts) => commands::cmd_train(&opts),
        Command::Evaluate(opts) => commands::cmd_evaluate(&opts),
        Command::Calibration(opts) => commands::cmd_audit_calibration(&opts),
        Command::Permute(opts) => commands::cmd_audit_permute(&opts),
        Command::Stability(opts) => commands::cmd_audit_stability(&opts),
    }
}
