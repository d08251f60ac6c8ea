//! Experiment harness: single training runs, comparison grids, gradient
//! checks and model summaries, shared by the `talu` binary and the tests.

pub mod compare;
pub mod config;
pub mod run;

use std::path::PathBuf;

// Training allocates and frees many large short-lived buffers; the system
// allocator returns them to the kernel and pays the page faults again.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub use compare::{run_compare, Cell, CellResult, Grid, Parallelism};
pub use config::RunConfig;
pub use run::{run_train, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
/// A gradient check exceeded its tolerance.
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] talu_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use talu_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::Data(_) | E::Format { .. } | E::Length { .. } | E::Io { .. }) => EXIT_DATA,
            CliError::Core(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_DATA,
        }
    }
}
