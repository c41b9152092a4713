use std::path::PathBuf;

/// Errors surfaced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input graph contains a cycle")]
    CycleDetected,
    #[error("component is not strongly connected")]
    NotStronglyConnected,
    #[error("empty ordering set for component {0}")]
    EmptyComponentSet(usize),
    #[error("ordering length {got} does not match node count {expected}, or is not a permutation")]
    LengthMismatch { got: usize, expected: usize },
    #[error("dataset has {0} wild-type samples, need at least 2")]
    MissingWildType(usize),
    #[error("gene {gene} has {got} knockout replicates, need at least 2")]
    InsufficientReplicates { gene: String, got: usize },
    #[error("value {0} out of range {1}")]
    ValueOutOfRange(f64, &'static str),
    #[error("ordering position {0} is invalid, penalty is defined for positions >= 2")]
    InvalidPosition(usize),
    #[error("node {0} does not appear in the ordering")]
    NodeNotInOrdering(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("estimates cover different gene sets ({0} vs {1})")]
    GeneSetMismatch(usize, usize),
    #[error("cannot place {edges} edges in a graph with capacity {capacity}")]
    EdgeBudgetTooLarge { edges: usize, capacity: usize },
    #[error("edge target {target} infeasible for {nodes} nodes (capacity {capacity})")]
    InfeasibleTarget {
        target: usize,
        nodes: usize,
        capacity: usize,
    },
    #[error("structural equation system is unstable (spectral radius {0} >= 1)")]
    SingularSystem(f64),
    #[error("unknown label `{0}`")]
    LabelMismatch(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::SingularSystem(_) | Error::ValueOutOfRange(..) => 4,
            _ => 3,
        }
    }
}
