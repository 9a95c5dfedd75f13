use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the analysis library can report.
///
/// Variant names double as stable machine-readable error codes (see
/// [`Error::code`]); the CLI and HTTP layers forward them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("bad npy header: {0}")]
    BadHeader(String),

    #[error("unsupported dtype {0:?}; only '<f4' is accepted")]
    UnsupportedDtype(String),

    #[error("fortran-ordered arrays are not supported")]
    UnsupportedOrder,

    #[error("invalid manifest: {0}")]
    BadManifest(String),

    #[error("bad csv {file}: {reason}")]
    BadCsv { file: String, reason: String },

    #[error("unknown run {0:?}")]
    UnknownRun(String),

    #[error("layer {0} does not exist")]
    UnknownLayer(usize),

    #[error("epoch {0} was not dumped")]
    UnknownEpoch(u32),

    #[error("channel {channel} does not exist in layer {layer}")]
    UnknownChannel { layer: usize, channel: usize },

    #[error("sample {0} is not in the probe set")]
    UnknownSample(usize),

    #[error("layer {0} is not dumped")]
    LayerNotDumped(usize),

    #[error("selection contains no samples")]
    EmptySelection,

    #[error("invalid slice expression: {0}")]
    InvalidSlice(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {0} is outside the probability domain (0, 1]")]
    DomainError(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no values to bin")]
    EmptyInput,

    #[error("sample sets are not aligned: {0}")]
    SampleMisalignment(String),

    #[error("histogram has zero total count")]
    EmptyHistogram,

    #[error("no model outputs dumped for epoch {0}")]
    MissingOutputs(u32),

    #[error("no max-pool switches recorded for layer {0}")]
    MissingSwitches(usize),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable error code, identical to the variant name.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::BadHeader(_) => "BadHeader",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::UnsupportedOrder => "UnsupportedOrder",
            Error::BadManifest(_) => "BadManifest",
            Error::BadCsv { .. } => "BadCsv",
            Error::UnknownRun(_) => "UnknownRun",
            Error::UnknownLayer(_) => "UnknownLayer",
            Error::UnknownEpoch(_) => "UnknownEpoch",
            Error::UnknownChannel { .. } => "UnknownChannel",
            Error::UnknownSample(_) => "UnknownSample",
            Error::LayerNotDumped(_) => "LayerNotDumped",
            Error::EmptySelection => "EmptySelection",
            Error::InvalidSlice(_) => "InvalidSlice",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::DomainError(_) => "DomainError",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::EmptyInput => "EmptyInput",
            Error::SampleMisalignment(_) => "SampleMisalignment",
            Error::EmptyHistogram => "EmptyHistogram",
            Error::MissingOutputs(_) => "MissingOutputs",
            Error::MissingSwitches(_) => "MissingSwitches",
            Error::Io { .. } => "Io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
