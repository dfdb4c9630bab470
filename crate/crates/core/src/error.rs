use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid position: component {index} is {value}")]
    InvalidPosition { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("time {t} outside the dataset range [{start}, {end}]")]
    TimeRange { t: f64, start: f64, end: f64 },

    #[error("numerical blow-up at t = {time}: {detail}")]
    NumericalBlowup { time: f64, detail: String },

    #[error("simulation aborted: {reason}; last good state written to {checkpoint:?}")]
    SimulationAborted { reason: String, checkpoint: Option<PathBuf> },

    #[error("matrix norm {norm} exceeds the supported limit {limit}")]
    Magnitude { norm: f64, limit: f64 },

    #[error("invalid action: norm {norm} is not 1")]
    InvalidAction { norm: f64 },

    #[error("episode already finished after {steps} steps")]
    EpisodeFinished { steps: usize },

    #[error("batch shape mismatch: {states} states, {actions} actions")]
    BatchShape { states: usize, actions: usize },

    #[error("the turbulent environment requires a dataset")]
    MissingDataset,

    #[error("evaluation mode error: {0}")]
    Mode(String),

    #[error("observable component {component} is degenerate (zero spread)")]
    DegenerateObservable { component: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("run has no checkpoints")]
    EmptyRun,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path:?}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
