use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Guard failures (bad grids, resolution, domain) map to CLI exit code 1;
/// numerical invariant breaches map to exit code 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("grid size {n} unsupported: need a power of two >= {min}")]
    GridUnsupported { n: usize, min: usize },

    #[error("grid mismatch: expected N={expected}, got N={found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("resolution guard: wavenumber {wavenumber} exceeds N/4 = {limit} (N={n})")]
    Resolution {
        wavenumber: u64,
        limit: usize,
        n: usize,
    },

    #[error("{what} = {value} outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has nonzero mean {mean:e}; homogeneous norm undefined")]
    NonzeroMean { mean: f64 },

    #[error("interval [{start}, {end}] straddles a shear-step boundary at {boundary}")]
    StraddlesStep { start: f64, end: f64, boundary: f64 },

    #[error("bisection bracket does not straddle target {target}: D(lo)={d_lo}, D(hi)={d_hi}")]
    BracketFailure { target: f64, d_lo: f64, d_hi: f64 },

    #[error("amplitude calibration failed: {reason}")]
    Calibration { reason: String },

    #[error("ledger closure breach: residual {residual:e} at t={t}")]
    LedgerClosure { residual: f64, t: f64 },

    #[error("mismatched runs in family: {reason}")]
    FamilyMismatch { reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl LabError {
    /// Exit status used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::LedgerClosure { .. } => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
