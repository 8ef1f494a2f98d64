use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported quantizer resolution: {0} bits")]
    UnsupportedBits(u32),

    #[error("power estimate must be positive (re={re}, im={im})")]
    NonPositivePower { re: f64, im: f64 },

    #[error("value {0} is not on the quantizer output grid")]
    OffGrid(f64),

    #[error("training length {n_p} is not a multiple of N_t*L = {block}")]
    Divisibility { n_p: usize, block: usize },

    #[error("training matrix is rank deficient (C C* not invertible)")]
    RankDeficient,

    #[error("operator mode error: {0}")]
    Mode(String),

    #[error("variance must be positive: {0}")]
    NonPositiveVariance(&'static str),

    #[error("reference vector has zero norm")]
    ZeroTruth,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
