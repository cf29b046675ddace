use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport problem rejected: {0}")]
    InvalidTransportProblem(String),

    #[error("transport problem infeasible (residual artificial flow {residual:e})")]
    InfeasibleTransport { residual: f64 },

    #[error("Sinkhorn iteration did not converge after {iterations} iterations (marginal error {marginal_error:e})")]
    SinkhornNotConverged {
        iterations: usize,
        marginal_error: f64,
    },

    #[error("transport solve failed for patch {patch}: {source}")]
    PatchTransport {
        patch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model state became non-finite at time index {time}")]
    ModelBlowUp { time: usize },

    #[error("inverse transform overflowed for value {value}")]
    TransformOverflow { value: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("local update failed at node {node}: {source}")]
    NodeUpdate {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("assimilation failed at time index {time}: {source}")]
    Assimilation {
        time: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
