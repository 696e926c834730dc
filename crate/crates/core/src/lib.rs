//! Consensus on the state derivative for linearly coupled integrators over
//! directed, delayed sensor networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`digraph`] holds the weighted, delayed directed graph and its Laplacian.
//! * [`connectivity`] decomposes a graph into strongly connected components,
//!   classifies it (SC / QSC / WC / disconnected) and computes the
//!   nonnegative left null vector `gamma` of the Laplacian.
//! * [`netgen`] draws random geometric networks with path-loss or Rayleigh
//!   fading gains and distance-proportional delays.
//! * [`dynamics`] integrates the delayed coupled system in discrete time and
//!   detects consensus on the state derivative.
//! * [`consensus`] evaluates the closed-form synchronized derivative, cluster
//!   predictions, two-pass debiasing and decision statistics.
//!
//! Edge convention throughout: an edge `(dst, src)` means node `dst` hears
//! node `src`, i.e. information flows from `src` to `dst`, and the adjacency
//! entry `A[dst][src]` is the gain of that link.

pub mod connectivity;
pub mod consensus;
pub mod digraph;
pub mod dynamics;
mod error;
pub mod netgen;

pub use connectivity::{
    analyze, classify, left_null_vector, scc_decompose, Classification, ConnectivityClass,
    ConnectivityReport, SccDecomposition,
};
pub use consensus::{
    apply_decision, centralized_ml, centralized_ml_std, debias_two_step, ml_setup, predict,
    predict_with_report, ClusterPrediction, ConsensusPrediction, DebiasMode, DebiasOutcome,
    DecisionFunction, DecisionStatistic, DelayMode,
};
pub use digraph::{laplacian, Digraph, Edge};
pub use dynamics::{
    detect_consensus, detect_in_window, quantize_delays, simulate, simulate_and_detect,
    ConsensusVerdict, DerivativeGroup, DetectorConfig, InitialCondition, NodeParams,
    QuantizedDelays, SimConfig, Simulator, Trajectory,
};
pub use error::{Error, Result};
pub use netgen::{
    build_channel, ensure_connectivity, place_nodes, ConnectivitySearch, ConnectivityTarget,
    Fading, GeneratedNetwork, Position, RadioConfig,
};
