use thiserror::Error;

/// Bad configuration: parameters, presets, policies.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

/// Domain errors raised by model and delay operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("node `{0}` is not a router")]
    NotARouter(String),
    #[error("bandwidth must be > 0 bits/s, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("propagation speed must be > 0 m/s, got {0}")]
    NonPositiveSpeed(f64),
    #[error("message size must be >= 0 bits, got {0}")]
    NegativeSize(f64),
    #[error("distance must be >= 0 m, got {0}")]
    NegativeDistance(f64),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no link between `{0}` and `{1}`")]
    NoLink(String, String),
}

/// A path crossed a router whose activity flag is 0.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("path blocked at inactive router `{router}`")]
pub struct PathBlocked {
    pub router: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error(transparent)]
    Blocked(#[from] PathBlocked),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// No active path exists between two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no route from `{source_node}` to `{destination}`")]
pub struct NoRoute {
    pub source_node: String,
    pub destination: String,
}

/// Failure of one or both legs of a round trip.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("round trip failed: forward {forward:?}, backward {backward:?}")]
pub struct RoundTripError {
    pub forward: Option<NoRoute>,
    pub backward: Option<NoRoute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("event scheduled at {at} ps before current time {now} ps")]
    PastEvent { at: i64, now: i64 },
    #[error("run_until target {target} ps is before current time {now} ps")]
    PastTarget { target: i64, now: i64 },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` has no clock")]
    NoClock(String),
    #[error("event refers to an unknown message, session or attack: {0}")]
    UnknownReference(String),
    #[error("{0}")]
    Sync(String),
}
