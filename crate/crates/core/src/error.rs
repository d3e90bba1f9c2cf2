use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate direction")]
    DegenerateDirection,

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("faces are not opposite faces of the same box")]
    FacesNotOpposite,

    #[error("no feasible grasp")]
    NoFeasibleGrasp,

    #[error("object exceeds gripper opening")]
    ExceedsGripperOpening,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("missing screw anchor point")]
    MissingAnchor,

    #[error("stale activation cache")]
    StaleCache,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("object not visible")]
    NotVisible,

    #[error("no approach direction reaches the grasp center")]
    Unreachable,

    #[error("empty grasp region")]
    EmptyRegion,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Diverged { .. } | Error::NoFeasibleGrasp
        )
    }
}
