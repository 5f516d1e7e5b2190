use std::path::PathBuf;

use thiserror::Error;

use crate::skeleton::BranchReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("image error for {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("histogram has fewer than two populated bins; image cannot be segmented")]
    DegenerateHistogram,

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("skeleton is not connected ({0} components)")]
    DisconnectedSkeleton(usize),

    #[error("skeleton forms a closed loop with no endpoints")]
    CyclicSkeleton,

    #[error("pruning could not reduce the skeleton to a simple path: {0}")]
    PruneFailed(BranchReport),

    #[error("medial axis too short: {0}")]
    AxisTooShort(String),

    #[error("source is not straight enough to bend (axis score {0:.2} < 95)")]
    SourceNotStraight(f64),

    #[error("warped chromosome does not fit the maximal canvas ({0})")]
    CanvasExceeded(String),

    #[error("target length must be positive")]
    ZeroTarget,

    #[error("density profile is empty")]
    EmptyProfile,

    #[error("confusion matrix is empty or not square")]
    EmptyMatrix,

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
