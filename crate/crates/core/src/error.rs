use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate covariance")]
    DegenerateCovariance,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("degenerate prediction: interior mass is zero but {expected} targets are carried")]
    DegeneratePrediction { expected: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cold start: the PDD batch is empty")]
    ColdStart,
    #[error("divergence: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("singular innovation covariance for component {component}")]
    SingularInnovation { component: usize },
    #[error("duplicate label {0}")]
    DuplicateLabel(i64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("frame {frame}, stage {stage}: {source}")]
    Stage {
        frame: u32,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at(self, frame: u32, stage: &'static str) -> Error {
        Error::Stage { frame, stage, source: Box::new(self) }
    }
}
