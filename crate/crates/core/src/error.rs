use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tail sum diverges: exponent {exponent} times decay rate {decay} is not above 1")]
    DivergentTail { exponent: f64, decay: f64 },

    #[error("truncation lag capped at {lag}: achieved tolerance {achieved:e} exceeds requested {requested:e}")]
    TruncationUnachievable {
        lag: usize,
        achieved: f64,
        requested: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("recursion produced a non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("distance decay degenerates after {usable_lags} usable lags")]
    DegenerateDecay { usable_lags: usize },

    #[error("block index {j} outside 1..={m}")]
    Index { j: usize, m: usize },

    #[error("sample carries no lagged conditional locations")]
    MissingLags,

    #[error("marginal density {density:e} too small relative to oracle precision {precision:e}")]
    DensityTooSmall { density: f64, precision: f64 },

    #[error("trim bounds degenerate: upper index {upper} <= lower index {lower}")]
    DegenerateTrim { lower: usize, upper: usize },

    #[error("statistic at position {index} is not strictly positive ({value})")]
    NonPositiveStatistic { index: usize, value: f64 },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },

    #[error("beta = {beta} is within 0.02 of the branch boundary 4*beta - 3 = gamma (gamma = {gamma}); choose a branch explicitly")]
    BoundaryRefusal { beta: f64, gamma: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
