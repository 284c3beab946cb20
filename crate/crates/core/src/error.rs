use thiserror::Error;

/// Errors produced by the coding, estimation and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdncError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("vertex (receiver {receiver}, packet {packet}) is not in the graph")]
    UnknownVertex { receiver: usize, packet: usize },

    #[error("coded packet contains no source packets")]
    EmptyCodedPacket,

    #[error("entry has no unheard attempts; nothing to estimate")]
    NoUncertainty,

    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("oracle size cap exceeded: {size} > {cap}")]
    OracleCapExceeded { size: usize, cap: usize },

    #[error("plan is inconsistent with the sender state: {0}")]
    InconsistentPlan(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, IdncError>;
