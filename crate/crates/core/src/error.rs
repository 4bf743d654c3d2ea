use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operation requires a {expected} array, got {found}")]
    GeometryKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid array geometry: {0}")]
    Geometry(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid configuration: {0}")]
    Configuration(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("effective channel is rank deficient (singular value ratio {ratio:.3e})")]
    SingularChannel { ratio: f64 },
    #[error("composite precoder has zero power")]
    DegeneratePrecoder,
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("path set serialization: {0}")]
    Serialization(String),
}
