use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("network error: {0}")]
    Network(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gzip decompression failed: {0}")]
    Decompress(String),
    #[error("feed schema error: {0}")]
    Schema(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown severity label {0:?}")]
    UnknownSeverity(String),
    #[error("asset error: {0}")]
    Asset(String),
    #[error("cannot tokenize empty text")]
    EmptyText,
    #[error("degenerate split: severity class {class} with {count} examples would leave a partition empty")]
    DegenerateSplit { class: usize, count: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: configured hidden size {configured}, encoder has {found}")]
    Dimension { configured: usize, found: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error("record {cve_id}: {source}")]
    Record {
        cve_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Network(_) => "NetworkError",
            Error::Io { .. } => "IoError",
            Error::Decompress(_) => "DecompressError",
            Error::Schema(_) => "SchemaError",
            Error::Json(_) => "JsonError",
            Error::UnknownSeverity(_) => "UnknownSeverityError",
            Error::Asset(_) => "AssetError",
            Error::EmptyText => "EmptyTextError",
            Error::DegenerateSplit { .. } => "DegenerateSplitError",
            Error::InvalidConfig(_) => "InvalidConfigError",
            Error::Dimension { .. } => "DimensionError",
            Error::Shape(_) => "ShapeError",
            Error::LengthMismatch { .. } => "LengthMismatchError",
            Error::Version { .. } => "VersionError",
            Error::Data(_) => "DataError",
            Error::Numeric(_) => "NumericError",
            Error::DegenerateCurve(_) => "DegenerateCurveError",
            Error::Bind { .. } => "BindError",
            Error::Record { source, .. } => source.kind(),
            Error::Tensor(_) => "TensorError",
            Error::Plot(_) => "PlotError",
        }
    }
}

pub(crate) fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
