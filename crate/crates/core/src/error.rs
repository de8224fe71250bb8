use thiserror::Error;

use crate::estimator::EstimationResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("network has no reference bus")]
    NoReferenceBus,

    #[error("network has {0} reference buses, expected exactly one")]
    MultipleReferenceBuses(usize),

    #[error("network is disconnected: bus {0} is unreachable from bus 1")]
    DisconnectedNetwork(usize),

    #[error("branch {from}-{to} has zero reactance")]
    ZeroReactance { from: usize, to: usize },

    #[error("measurement {index} ({kind}) is not supported by the DC model")]
    UnsupportedKindForDC { index: usize, kind: &'static str },

    #[error("state vector has no voltage magnitudes; AC evaluation needs them")]
    MissingMagnitudes,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("network is unobservable: {0}")]
    UnobservableNetwork(String),

    #[error("no redundancy: {meters} meters for {states} state variables")]
    NoRedundancy { meters: usize, states: usize },

    #[error("residual covariance is numerically singular for every meter (critical meters: {0:?})")]
    NumericallySingularOmega(Vec<usize>),

    #[error("estimator did not converge after {} iterations", .0.iterations)]
    DidNotConverge(Box<EstimationResult>),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit class: 2 input, 3 numerical, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnobservableNetwork(_) | Error::NumericallySingularOmega(_) => 3,
            Error::DidNotConverge(_) => 4,
            _ => 2,
        }
    }
}
