use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {}", join_violations(.0))]
    InvalidGame(Vec<Violation>),

    #[error("no such edge: layer {layer}, index {index}")]
    NoSuchEdge { layer: usize, index: usize },

    #[error("state does not match game: {0}")]
    StateMismatch(String),

    #[error("decomposition exhausted: layer {layer} has fewer than {j} edges")]
    DecompositionExhausted { j: usize, layer: usize },

    #[error("instance too large for exact check: {size} exceeds budget {budget}")]
    TooLarge { size: String, budget: u64 },

    #[error("edge capacities must be split into unit-capacity copies first")]
    NonUnitCapacity,

    #[error("optimal states are only defined for the all-zero starting pattern")]
    NonZeroStartingPattern,

    #[error("simulation exceeded horizon bound {bound}")]
    HorizonExceeded { bound: u64 },

    #[error("arrival ordering violated: player {player} reaches node v_{node} before player {}", .player - 1)]
    OrderingViolated { player: usize, node: usize },

    #[error("{n} players exceed the simulation cap of {cap}; use analytic mode")]
    SimulationCap { n: String, cap: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
