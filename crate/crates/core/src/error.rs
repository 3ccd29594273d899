use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state vector has zero norm")]
    ZeroNorm,
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("Born probability has imaginary residue {0:e}")]
    ComplexProbability(f64),
    #[error("ITU channel {0} outside grid [{min}, {max}]", min = crate::source::ITU_MIN_CHANNEL, max = crate::source::ITU_MAX_CHANNEL)]
    ChannelOutOfGrid(i64),
    #[error("channel detuning must be at least 1, got {0}")]
    InvalidDetuning(i64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time-bin slots unresolvable: UMI delay {delay:e} s must exceed coincidence window {window:e} s")]
    SlotsUnresolvable { delay: f64, window: f64 },
    #[error("CAR undefined: no accidental coincidences recorded")]
    CarUndefined,
    #[error("fringe data insufficient: {0}")]
    InsufficientData(String),
    #[error("fringe fit did not converge: {0}")]
    FitFailed(String),
    #[error("correlation undefined: zero total coincidences")]
    ZeroCounts,
    #[error("measurement settings are not informationally complete")]
    SingularDesign,
    #[error("calibration target unattainable: {0}")]
    Unattainable(String),
    #[error("malformed count record: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
