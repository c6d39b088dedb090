use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: node index {index} out of range (mesh has {count} nodes)")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        count: usize,
    },

    #[error("element {element} is degenerate (zero reference volume)")]
    DegenerateElement { element: usize },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("node {node} is Dirichlet but lies on neither annulus circle")]
    Classification { node: usize },

    #[error("energy undefined for det(F) = {det} <= 0")]
    Domain { det: f64 },

    #[error("singular configuration (det(F) = 0){}", element.map(|e| format!(" on element {e}")).unwrap_or_default())]
    Singular { element: Option<usize> },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    Indefinite { pivot: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
