use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root component {component:?} has a rank-deficient Laplacian block (null space dimension > 1)")]
    RankDeficient { component: Vec<usize> },

    #[error("non-finite state at step {step} (node {node}); reduce the sampling interval or the coupling gain")]
    NonFiniteState { step: usize, node: usize },

    #[error("coincident nodes {0} and {1} with a positive path-loss exponent")]
    CoincidentNodes(usize, usize),

    #[error("could not reach {target} connectivity after {attempts} attempts")]
    ConnectivityBudgetExhausted { target: String, attempts: usize },

    #[error("no global consensus: {0}")]
    NoGlobalConsensus(String),

    #[error("degenerate normalization: all-ones consensus value {0:e} is too small")]
    DegenerateNormalization(f64),

    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}
