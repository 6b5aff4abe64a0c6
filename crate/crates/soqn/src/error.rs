use std::fmt;

/// Errors produced by model construction, the analytic solvers, and the
/// simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The routing matrix does not connect every node to every other node,
    /// or the traffic equations it induces are singular.
    NotIrreducible,
    /// The model breaks a structural invariant. Each entry describes one
    /// violation in plain text.
    InvalidModel(Vec<String>),
    /// The task arrival rate is at or above what the inner network can
    /// sustain with the given robot pool.
    Unstable { arrival_rate: f64, capacity: f64 },
    /// No robot pool of any size can keep up with this arrival rate.
    ArrivalExceedsBottleneck { arrival_rate: f64, bottleneck: f64 },
    /// The exact chain solver refuses state spaces it cannot handle.
    StateSpaceTooLarge { states: u128, limit: u128 },
    /// A node label was not found in the network.
    UnknownLabel(String),
    /// The operation needs a first-come-first-served node.
    NotFcfs(String),
    /// A configuration file or parameter set could not be used.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotIrreducible => write!(f, "routing not irreducible"),
            Error::InvalidModel(violations) => {
                write!(f, "invalid model: {}", violations.join("; "))
            }
            Error::Unstable {
                arrival_rate,
                capacity,
            } => write!(
                f,
                "unstable: arrival rate {arrival_rate} tasks/s is at or above \
                 the sustainable {capacity} tasks/s"
            ),
            Error::ArrivalExceedsBottleneck {
                arrival_rate,
                bottleneck,
            } => write!(
                f,
                "arrival rate {arrival_rate} tasks/s is at or above the inner \
                 bottleneck {bottleneck} tasks/s; no robot count stabilizes it"
            ),
            Error::StateSpaceTooLarge { states, limit } => write!(
                f,
                "exact chain would have {states} states, above the {limit} limit"
            ),
            Error::UnknownLabel(label) => write!(f, "no node labelled {label:?}"),
            Error::NotFcfs(label) => {
                write!(f, "node {label:?} is not a first-come-first-served station")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
