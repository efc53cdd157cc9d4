//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while loading, validating, or editing graph bundles.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {num_classes} classes (node {node})")]
    LabelOutOfRange {
        node: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("self-loops are not allowed: node {0}")]
    SelfLoopForbidden(usize),
    #[error("node id {id} out of range for {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },
    #[error("edge ({0}, {1}) already present")]
    DuplicateAdd(usize, usize),
    #[error("edge ({0}, {1}) not present, cannot remove")]
    MissingRemove(usize, usize),
    #[error("injected node {0} has no edges")]
    EmptyNeighborhood(usize),
    #[error("invalid injection target: {0}")]
    InvalidTarget(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed metadata: {0}")]
    Meta(String),
}

/// Errors from dataset preparation (normalization, splitting, presets).
#[derive(Debug, Error)]
pub enum PrepError {
    #[error("feature matrix has zero variance")]
    ZeroVariance,
    #[error("graph too small to split: {num_nodes} nodes, need at least {min}")]
    TooSmall { num_nodes: usize, min: usize },
    #[error("split fractions sum past 1: {0}")]
    FractionOverflow(f64),
    #[error("unknown dataset: {0}")]
    UnknownDataset(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed splits file: {0}")]
    Malformed(String),
}

/// Errors from the differentiation tape.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward requires a scalar (1x1) loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

/// Errors from model construction and checkpoint persistence.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("parameter {0} missing from model")]
    MissingParameter(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors from training loops.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: loss is not finite at epoch {0}")]
    Diverged(usize),
    #[error("empty train set")]
    EmptyTrainSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Errors from the defense preprocessing stage.
#[derive(Debug, Error)]
pub enum SvdError {
    #[error("rank {rank} too large for {n}x{n} matrix")]
    RankTooLarge { rank: usize, n: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
}

/// Errors from attack execution.
#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack requires the {expected} scenario, budget declares {actual}")]
    WrongScenario { expected: String, actual: String },
    #[error("graph too large for a dense adjacency gradient: {n} nodes (limit {limit})")]
    TooLargeForDense { n: usize, limit: usize },
    #[error("no targets supplied")]
    NoTargets,
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bad attack artifact: {0}")]
    BadArtifact(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors from the evaluation matrix and leaderboard assembly.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty mask")]
    EmptyMask,
    #[error("prediction/label length mismatch: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("empty score list")]
    EmptyScores,
    #[error("malformed leaderboard: {0}")]
    Malformed(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
