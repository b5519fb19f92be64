use std::path::PathBuf;

/// Errors produced by the rendering, guidance and optimization layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("UVs required: {0}")]
    MissingUvs(String),
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid texture: {0}")]
    Texture(String),
    #[error("invalid environment map: {0}")]
    Environment(String),
    #[error("prefiltered tables are stale (built for env version {built}, env is at {current}); rebuild required")]
    StalePrefilter { built: u64, current: u64 },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(&'static str),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("image codec error: {0}")]
    Codec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
