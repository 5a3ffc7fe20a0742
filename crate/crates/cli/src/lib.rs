//! Experiment driver behind the `choquard` binary.
//!
//! Every subcommand is an [`ExperimentConfig`] handed to [`run_experiment`],
//! which computes a list of [`Artifact`]s. With an output directory the
//! artifacts are written there together with `manifest.json`; without one the
//! primary artifact goes to stdout.

pub mod config;
pub mod plot;
pub mod run;
pub mod schema;

pub use config::{Experiment, ExperimentConfig, InitKind, ShapeKind};
pub use plot::{emit_plot, render_plot, PlotKind};
pub use run::{field_dump, field_summary, run_experiment, Artifact, FieldProfile, Manifest, RunOutcome};

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(choquard::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Convergence(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(_) => 1,
        }
    }
}

impl From<choquard::Error> for CliError {
    fn from(e: choquard::Error) -> Self {
        use choquard::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Domain(_) | E::Dimension(_) | E::Resolution(_) | E::Index { .. } | E::Resource(_) => {
                CliError::Config(e.to_string())
            }
            E::Convergence(_) | E::NotFound(_) | E::Fit(_) => CliError::Convergence(e.to_string()),
            E::Io(io) => CliError::Io(io),
            E::Format(m) => CliError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m)),
            other => CliError::Core(other),
        }
    }
}
