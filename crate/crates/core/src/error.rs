use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("null table needs {needed} bytes but the budget is {budget} bytes; coarsen the time grid or reduce the sample count")]
    Resource { needed: usize, budget: usize },

    #[error(
        "HC scan range is empty: floor(alpha0 * N) < 1 for alpha0 = {alpha0}, N = {n_streams}"
    )]
    DegenerateScan { alpha0: f64, n_streams: usize },

    #[error("Chen-Chan log argument is non-positive ({value}) at stream {stream}")]
    ChenChanDomain { stream: usize, value: f64 },

    #[error("exponential fit needs at least {required} qualifying survival points, found {found}")]
    FitDegenerate { found: usize, required: usize },

    #[error("calibration bracket [{b_lo}, {b_hi}] does not straddle target ARL {target}: ARL(b_lo) = {arl_lo}, ARL(b_hi) = {arl_hi}")]
    Bracket {
        b_lo: f64,
        b_hi: f64,
        target: f64,
        arl_lo: f64,
        arl_hi: f64,
    },

    #[error("malformed null table file: {0}")]
    TableFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
