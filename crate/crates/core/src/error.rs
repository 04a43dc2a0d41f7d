use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a model or scenario invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Several invariant violations found while validating one document.
    #[error("validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("feeder topology: {0}")]
    Topology(String),

    #[error("power flow did not converge after {iterations} sweeps (last update {last_delta:.3e} pu)")]
    NonConvergence { iterations: usize, last_delta: f64 },

    #[error("network matrix is singular")]
    SingularNetwork,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("frame: {0}")]
    Frame(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("peer reported error code {0}")]
    Peer(u64),

    #[error("timed out waiting for peer")]
    Timeout,

    /// The lockstep session aborted; the partially recorded run is kept for inspection.
    #[error("session aborted: {reason}")]
    SessionAborted {
        reason: String,
        partial: Box<crate::scenario::RunResult>,
    },

    #[error("oracle disagreement: {0}")]
    OracleDisagreement(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 validation, 2 runtime/transport, 3 oracle.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Invalid(_) | Error::Validation(_) | Error::Topology(_) | Error::Json(_) => 1,
            Error::OracleDisagreement(_) => 3,
            _ => 2,
        }
    }
}
