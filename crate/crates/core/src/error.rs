use thiserror::Error;

/// Errors raised while building or querying an environment.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("cannot register `{0}` after the simulation has started")]
    RegistrationAfterStart(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("`{0}` is not a thermal node")]
    UnknownNode(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("entity `{entity}` is a {kind}, expected {expected}")]
    WrongKind {
        entity: String,
        kind: &'static str,
        expected: &'static str,
    },
    #[error("parameter `{0}` must be strictly positive")]
    NonPositiveParameter(String),
    #[error("parameter `{0}` must be finite")]
    NonFiniteParameter(String),
    #[error("batch size must be at least 1")]
    ZeroCount,
}

/// Errors raised by the step loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("entity `{entity}` does not accept channel `{channel}`")]
    UnknownChannel { entity: String, channel: String },
    #[error("slot `{slot}` became non-finite at step {step}; state rolled back")]
    NonFiniteState { slot: String, step: u64 },
    #[error("got {actions} action vectors for {envs} environments")]
    LengthMismatch { envs: usize, actions: usize },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Errors from mixture bookkeeping and rate-law evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("solvent mass must be strictly positive, got {0}")]
    NonPositiveSolvent(f64),
    #[error("amount of `{species}` must be non-negative, got {moles}")]
    NegativeMoles { species: String, moles: f64 },
    #[error("transfer mass must be non-negative, got {0}")]
    NegativeMass(f64),
    #[error("cannot draw {requested} kg from {available} kg")]
    Overdraw { requested: f64, available: f64 },
    #[error("pre-exponential factor must be strictly positive, got {0}")]
    NonPositiveA(f64),
    #[error("activation energy must be non-negative, got {0}")]
    NegativeEa(f64),
    #[error("invalid reaction template `{template}`: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Errors from building or verifying a workflow tree.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("node `{0}` is its own descendant")]
    CycleDetected(String),
    #[error("unknown entity `{entity}` in node `{node}`")]
    UnknownEntity { node: String, entity: String },
    #[error("entity `{entity}` in node `{node}` is a {kind}, expected {expected}")]
    WrongKind {
        node: String,
        entity: String,
        kind: &'static str,
        expected: &'static str,
    },
    #[error("leaf `{0}` has both an action and children")]
    LeafWithChildren(String),
    #[error("node `{0}` has neither an action nor children")]
    EmptyNode(String),
    #[error("reference to undefined node `{0}`")]
    UnknownNode(String),
    #[error("node id `{0}` is used twice")]
    DuplicateNode(String),
    #[error("invalid parameter in node `{node}`: {reason}")]
    InvalidParameter { node: String, reason: String },
    #[error("workflow is still running")]
    StillRunning,
    #[error(transparent)]
    State(#[from] StateError),
}
