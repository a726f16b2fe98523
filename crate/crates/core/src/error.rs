use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A rejected configuration key or cross-field check.
///
/// Each variant carries a stable machine-readable code, see [`ConfigError::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}` as key = value")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given more than once")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: invalid value `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("partition bounds must satisfy upper > lower > 0 (lower={lower}, upper={upper})")]
    Bounds { lower: f64, upper: f64 },
    #[error("bucket count must be >= 1")]
    BucketCount,
    #[error("fee_rate must lie in (0, 1), got {0}")]
    FeeRate(f64),
    #[error("capital must be finite and > 0, got {0}")]
    Capital(f64),
    #[error("fixed capital level must be finite and > 0, got {0}")]
    FixedCapital(f64),
    #[error("gas parameters must be finite and > 0")]
    Gas,
    #[error("volume cap must be finite and > 0, got {0}")]
    VolumeCap(f64),
    #[error("profile variance must be finite and > 0, got {0}")]
    Variance(f64),
    #[error("profile bound must be finite and > 0, got {0}")]
    ProfileBound(f64),
    #[error("profile mean must be finite, got {0}")]
    ProfileMean(f64),
    #[error("custom weights: {0}")]
    Weights(String),
    #[error("strategy `{0}` needs a tau value")]
    TauRequired(String),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "config.syntax",
            ConfigError::UnknownKey(_) => "config.unknown_key",
            ConfigError::DuplicateKey(_) => "config.duplicate_key",
            ConfigError::MissingKey(_) => "config.missing_key",
            ConfigError::InvalidValue { .. } => "config.invalid_value",
            ConfigError::Bounds { .. } => "config.bounds",
            ConfigError::BucketCount => "config.bucket_count",
            ConfigError::FeeRate(_) => "config.fee_rate",
            ConfigError::Capital(_) => "config.capital",
            ConfigError::FixedCapital(_) => "config.fixed_capital",
            ConfigError::Gas => "config.gas",
            ConfigError::VolumeCap(_) => "config.volume_cap",
            ConfigError::Variance(_) => "config.variance",
            ConfigError::ProfileBound(_) => "config.profile_bound",
            ConfigError::ProfileMean(_) => "config.profile_mean",
            ConfigError::Weights(_) => "config.weights",
            ConfigError::TauRequired(_) => "config.tau_required",
        }
    }
}

/// Problems with an input price series.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("row {row}: price must be finite and > 0, got `{value}`")]
    BadPrice { row: usize, value: String },
    #[error("row {row}: timestamp {ts} does not increase on the previous row")]
    NonAscending { row: usize, ts: i64 },
    #[error("need at least {need} prices, found {found}")]
    TooShort { need: usize, found: usize },
    #[error("price {price} at index {index} lies outside the partition [{lower}, {upper}]")]
    OutOfPartition {
        index: usize,
        price: f64,
        lower: f64,
        upper: f64,
    },
    #[error("{0}")]
    Mismatch(String),
}

impl DataError {
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "data.io",
            DataError::Malformed { .. } => "data.malformed",
            DataError::BadPrice { .. } => "data.bad_price",
            DataError::NonAscending { .. } => "data.non_ascending",
            DataError::TooShort { .. } => "data.too_short",
            DataError::OutOfPartition { .. } => "data.out_of_partition",
            DataError::Mismatch(_) => "data.mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("target fee {target} unreachable on the variance grid (curve spans [{curve_min}, {curve_max}])")]
    Unreachable {
        target: f64,
        curve_min: f64,
        curve_max: f64,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(e) => e.code(),
            Error::Data(e) => e.code(),
            Error::Unreachable { .. } => "calibration.unreachable",
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Data(_) => 3,
            Error::Unreachable { .. } => 4,
        }
    }
}
