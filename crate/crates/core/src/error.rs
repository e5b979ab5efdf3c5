use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("sample exceeds bit depth: value {value} > {max}")]
    SampleExceedsBitDepth { value: u16, max: u16 },
    #[error("sidecar: {0}")]
    Sidecar(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("colmap: {0}")]
    Colmap(String),
    #[error("camera model {0} is not supported; undistort inputs first (SIMPLE_PINHOLE only)")]
    UnsupportedCameraModel(String),
    #[error("ply: {0}")]
    Ply(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png: {0}")]
    Png(String),
    #[error("no raw frame for {}: {}", if .0.len() == 1 { "pose" } else { "poses" }, .0.join(", "))]
    MissingRawFrames(Vec<String>),
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
