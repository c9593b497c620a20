use std::fmt;

/// Where in a training run a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    pub epoch: usize,
    pub step: usize,
}

impl fmt::Display for StepContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} step {}", self.epoch, self.step)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate rotation: quaternion has zero norm")]
    DegenerateRotation,
    #[error("degenerate splat: projected 2x2 covariance is not positive definite")]
    DegenerateSplat,
    #[error("invalid Gaussian count {0}: must be at least 1")]
    InvalidCount(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("numerical divergence at record {record} (loss {loss}){}", context.map(|c| format!(", {c}")).unwrap_or_default())]
    Divergence {
        record: usize,
        loss: f64,
        context: Option<StepContext>,
    },
    #[error("unsupported MRC mode {0} (only mode 2, 32-bit float, is supported)")]
    UnsupportedMrcMode(i32),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unknown phantom kind '{0}' (expected helix, blob-cluster or two-lobe)")]
    UnknownPhantom(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// I/O failure annotated with the file it concerns.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    /// Process exit code for the command-line tool: 1 usage, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownPhantom(_) | Error::InvalidCount(_) => 1,
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
