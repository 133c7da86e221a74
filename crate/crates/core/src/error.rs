use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target concentration {target} unreachable (r=0 gives {at_zero:.4}, r={r_max} gives {at_max:.4})")]
    Unreachable {
        target: f64,
        at_zero: f64,
        at_max: f64,
        r_max: f64,
    },

    #[error("infeasible balance sheet: bank {bank} has deposits {deposits:.3e}")]
    InfeasibleSheet { bank: usize, deposits: f64 },

    #[error("no eligible protection seller for loan {creditor} -> {debtor}")]
    NoEligibleSeller { creditor: usize, debtor: usize },

    #[error("amplitude calibration diverged: failure rate spans [{p_low:.3e}, {p_high:.3e}], target {target:.3e}")]
    CalibrationDiverged {
        p_low: f64,
        p_high: f64,
        target: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("baseline severity curve is constant and cannot be inverted")]
    NonInvertible,

    #[error("sample {sample_index} still infeasible after {attempts} regenerations")]
    SampleExhausted { sample_index: u64, attempts: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
