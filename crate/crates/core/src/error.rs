use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    Shape { shape: Vec<usize>, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("capacity exceeded: {what} needs {bytes} bytes, budget is {budget} bytes")]
    Capacity { what: String, bytes: u128, budget: u64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {what}")]
    Divergence { iteration: u64, what: String },
    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
