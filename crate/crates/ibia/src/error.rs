use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{what} line {line}: {msg}")]
    Parse { what: &'static str, line: usize, msg: String },
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Core(#[from] ibia_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
