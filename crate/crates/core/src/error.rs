use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("qubit amplitudes are not normalized (|alpha|^2 + |beta|^2 = {0})")]
    NotNormalized(f64),

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("overdamped regime: 2*delta = {two_delta} rad/us does not exceed kappa = {kappa} rad/us")]
    Overdamped { two_delta: f64, kappa: f64 },

    #[error("effective model requires omega == g (omega = {omega}, g = {g})")]
    UnequalCouplings { omega: f64, g: f64 },

    #[error("compensation infeasible at kappa = {kappa} rad/us, t_d = {t_d} us (best gain {best_gain})")]
    CompensationInfeasible { kappa: f64, t_d: f64, best_gain: f64 },

    #[error("no detection time allows compensation: kappa = {kappa} rad/us is too large")]
    KappaTooLarge { kappa: f64 },

    #[error("root or optimum not bracketed: {0}")]
    BracketFailure(String),

    #[error("conditional state norm underflow at t = {time} us")]
    NormUnderflow { time: f64 },

    #[error("degenerate reference amplitudes in phase calibration: {0}")]
    DegenerateReference(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
