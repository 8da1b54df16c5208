use thiserror::Error;

/// Failure categories. Each maps to a fixed process exit code so harnesses
/// can assert on the kind of failure without parsing messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("statistics: {0}")]
    Statistics(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Check(_) => 1,
            Error::Statistics(_) => 2,
            Error::MissingInput(_) => 3,
            Error::Usage(_) => 4,
            Error::Geometry(_) => 5,
        }
    }

    /// The message without the category prefix.
    pub fn message(&self) -> String {
        match self {
            Error::Config(m)
            | Error::Statistics(m)
            | Error::MissingInput(m)
            | Error::Usage(m)
            | Error::Geometry(m)
            | Error::Format(m)
            | Error::Check(m) => m.clone(),
            Error::Io(e) => e.to_string(),
            Error::Json(e) => e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Statistics(_) => "statistics",
            Error::MissingInput(_) => "missing_input",
            Error::Usage(_) => "usage",
            Error::Geometry(_) => "geometry",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Check(_) => "check",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
