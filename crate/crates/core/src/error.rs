use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point outside the admissible domain: {0}")]
    OutsideDomain(String),

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (partial value {partial:e}, error estimate {error:e})"
    )]
    NotConverged {
        partial: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error(
        "{censored} of {paths} paths hit the step budget ({fraction:.4} > threshold {threshold:.4}); \
         increase max_steps or time_step"
    )]
    Censored {
        censored: usize,
        paths: usize,
        fraction: f64,
        threshold: f64,
    },

    #[error("no admissible b on the ladder 2^{lo}..=2^{hi}")]
    NoLadderValue { lo: i32, hi: i32 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
