use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate {value} on axis {axis} lies outside [0, 1]")]
    CoordinateOutOfRange { axis: usize, value: f64 },
    #[error("hierarchy would have {nodes} nodes, above the cap of {cap}")]
    HierarchyTooLarge { nodes: u64, cap: u64 },
    #[error("level {level} out of range for hierarchy of depth {depth}")]
    LevelOutOfRange { level: u32, depth: u32 },
    #[error("expected a leaf cell, got a level-{0} cell")]
    NotALeaf(u32),
    #[error("cell index out of range for this hierarchy")]
    InvalidCell,

    #[error("input lengths differ: {supply} supply vs {demand} demand")]
    LengthMismatch { supply: usize, demand: usize },
    #[error("not enough supply: {supply} supply for {demand} demand")]
    InsufficientSupply { supply: usize, demand: usize },
    #[error("instance too large for {solver}: {size} > {limit}")]
    InstanceTooLarge {
        solver: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("empty instance")]
    EmptyInstance,
    #[error("optimality certificate failed: {0}")]
    CertificateFailed(String),

    #[error("invalid threshold schedule: {0}")]
    InvalidSchedule(String),
    #[error("threshold at level {level} is negative ({value}); free supply too small for this depth")]
    NegativeThreshold { level: u32, value: f64 },
    #[error("root cell undersupplied: {count} units against threshold {threshold}")]
    RootUndersupplied { count: u64, threshold: f64 },
    #[error("no supply available")]
    NoSupply,

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace is missing arrival records")]
    MissingTrace,
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-positive value {0} in log-log fit")]
    NonPositive(f64),
}
