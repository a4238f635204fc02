use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite integrand")]
    NonFinite,
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("use sup-norm instead")]
    UseSupNorm,
    #[error("non-dyadic dilation: lambda = {0}")]
    NonDyadic(f64),
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("resolution below finest level ({resolution} < {finest})")]
    ResolutionBelowFinest { resolution: i32, finest: i32 },
    #[error("wavelet order too low: u = {u}, s = {s}")]
    WaveletOrderTooLow { u: u32, s: f64 },
    #[error("unsupported wavelet order u = {0}")]
    UnsupportedOrder(u32),
    #[error("missing coefficient key (j = {0}, r = {1})")]
    MissingKey(u32, usize),
    #[error("insufficient kernel moments: N = {n_moments}, s = {s}")]
    InsufficientMoments { n_moments: u32, s: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("range escape at sample {0}")]
    RangeEscape(usize),
    #[error("trace not defined at these parameters (l = {l}, r = {r})")]
    TraceWindow { l: usize, r: u32 },
    #[error("singular moment system (condition number {0:e})")]
    SingularMoments(f64),
    #[error("degenerate decomposition")]
    Degenerate,
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
