use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid morphology ({x}, {y}): parameters must be strictly positive")]
    Morphology { x: f64, y: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid search state: {0}")]
    SearchState(String),
    #[error("population does not belong to this search state: {0}")]
    Population(String),
    #[error("invalid sample groups: {0}")]
    Groups(String),
    #[error("archive is empty")]
    EmptyArchive,
    #[error("invalid run configuration: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;
