use std::path::PathBuf;

use crate::icp::IcpResult;

#[derive(Debug, thiserror::Error)]
pub enum CalibError {
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("insufficient structure: found {found} of 3 planes")]
    InsufficientStructure { found: usize },
    #[error("degenerate corner: normal Gram determinant {0:.4}")]
    DegenerateCorner(f64),
    #[error("ambiguous plane match: best score {0:.3} of 3")]
    AmbiguousMatch(f64),
    #[error("icp diverged after {} iterations", .0.iterations)]
    Diverged(Box<IcpResult>),
    #[error("no extrinsic for sensor {0:?}")]
    MissingCalibration(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}
