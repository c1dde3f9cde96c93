use std::io;
use std::path::PathBuf;

use geodesic_reeb::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for invalid input, 2 when a numerical routine failed on valid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io { .. } => 1,
            LabError::Core(e) => {
                if is_numeric(e) {
                    2
                } else {
                    1
                }
            }
        }
    }
}

pub fn is_numeric(e: &CoreError) -> bool {
    use CoreError::*;
    matches!(
        e,
        SingularReebSystem { .. }
            | StepUnderflow { .. }
            | OpenOrbit { .. }
            | NoReturn { .. }
            | NoConvergence { .. }
            | DeterminantGap { .. }
            | ArcUnderresolved { .. }
            | WindingLemmaViolation { .. }
            | DegenerateEndpoint { .. }
            | ResolutionFailure(_)
            | LinkingResidual { .. }
    )
}
