//! Config handling and subcommands behind the `alstm` binary.

pub mod commands;
pub mod config;

use alstm_core::Error;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => 3,
        Error::Artifact(_) => 4,
        _ => 2,
    }
}
