use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible partition: {p} clusters of at least {min_size} nodes need {needed} nodes, graph has {n}")]
    InfeasiblePartition {
        p: usize,
        min_size: usize,
        n: usize,
        needed: usize,
    },

    #[error("patch graph is disconnected ({components} components)")]
    DisconnectedPatchGraph { components: usize },

    #[error("patch {patch} has no patch edges")]
    IsolatedPatch { patch: usize },

    #[error("overlap expansion stalled for patch {patch} towards cluster {towards}: reached {reached} of {target} nodes")]
    FrontierExhausted {
        patch: usize,
        towards: usize,
        reached: usize,
        target: usize,
    },

    #[error("overlap of {overlap} nodes is too small to identify a {dim}-dimensional transform (need at least {})", dim + 1)]
    InsufficientOverlap { overlap: usize, dim: usize },

    #[error("patch {patch}: eigenvector block is rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { patch: usize, ratio: f64 },

    #[error("eigensolver did not converge in {iterations} iterations (max residual {max_residual:e})")]
    EigenNotConverged {
        iterations: usize,
        residuals: Vec<f64>,
        max_residual: f64,
    },

    #[error("translation solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    LsqNotConverged { iterations: usize, residual: f64 },

    #[error("node {node} is not covered by any patch")]
    UncoveredNode { node: usize },

    #[error("requested dimension {d} exceeds node count {n}")]
    DimensionTooLarge { d: usize, n: usize },

    #[error("patch {patch}: {message}")]
    Patch { patch: usize, message: String },

    #[error("cannot sample {requested} non-edges, only {available} exist")]
    NotEnoughNonEdges { requested: usize, available: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
