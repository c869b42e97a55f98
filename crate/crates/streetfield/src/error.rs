use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] streetfield_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: usize, message: String },
    #[error("unsupported camera model {0}")]
    UnsupportedCameraModel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Dataset(String),
    #[error("gradient check failed for {0}")]
    GradientCheck(String),
    #[error("loss became non-finite at iteration {0}")]
    Diverged(u64),
}

pub type AppResult<T> = Result<T, AppError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
    let path = path.into();
    move |source| AppError::Io { path, source }
}

pub(crate) fn parse_err(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> AppError {
    AppError::Parse { file: file.into(), line, message: message.into() }
}
