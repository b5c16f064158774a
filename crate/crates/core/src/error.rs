use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("configurations have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("pair is not ordered at site {site}: upper copy below lower copy")]
    OrderViolation { site: i32 },
    #[error("bond {bond} is outside [-N, N-1]")]
    BondOutOfRange { bond: i32 },
    #[error("event does not belong to the {0} model")]
    WrongModel(&'static str),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("state space has {states} states, above the guard of {guard}")]
    StateSpaceTooLarge { states: usize, guard: usize },
    #[error("fit window [{lo}, {hi}] has {points} usable points, need at least {needed}")]
    WindowTooSparse {
        lo: f64,
        hi: f64,
        points: usize,
        needed: usize,
    },
    #[error("every replica is extinct before the fit window starts at t={lo}")]
    AllZeroTail { lo: f64 },
    #[error("no rate estimate for site {site} in bin starting at t={bin_start}")]
    MissingRates { site: i32, bin_start: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
