//! Command-line driver for the interaction-type pipeline.

pub mod config;
pub mod gradcheck;
pub mod presets;
pub mod run;
pub mod synth;

use thiserror::Error;

/// Failures that originate in the driver rather than the library.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("gradient check failed for {0} parameter(s)")]
    GradcheckFailed(usize),
}

/// Process exit status for a failed command. Usage errors exit with 2
/// before any command runs.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => 3,
                CliError::GradcheckFailed(_) => 5,
            };
        }
        if let Some(e) = cause.downcast_ref::<hmgrl::Error>() {
            use hmgrl::Error as E;
            return match e {
                E::Parse { .. } | E::UnknownDrug(_) | E::Validation(_) => 4,
                E::Param(_) | E::BatchSize { .. } | E::Shape { .. } => 3,
                E::NonFinite(_) => 5,
                E::Checkpoint(_) | E::Io(_) => 6,
            };
        }
        if cause.is::<std::io::Error>() {
            return 6;
        }
    }
    1
}
