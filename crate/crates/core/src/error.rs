use thiserror::Error;

/// Errors raised by the library. Diagnostic operations (residuals, defects)
/// never fail; constructors and solvers reject malformed input here.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("operator is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("operator is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("invalid grading ({plus}+{minus}) for dimension {dim}")]
    InvalidGrading { plus: usize, minus: usize, dim: usize },

    #[error("invalid spin {0}: 2j must be a nonnegative integer")]
    InvalidSpin(f64),

    #[error("invalid oscillator truncation: N={n}, buffer={buffer} (need N >= 8 and 1 <= buffer <= N/4)")]
    InvalidTruncation { n: usize, buffer: usize },

    #[error("Fock state {n} lies in the untrusted buffer (interior is 0..{interior})")]
    BufferZone { n: usize, interior: usize },

    #[error("time function outside the closed family: {0}")]
    OutsideFamily(String),

    #[error("cannot parse time function {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error("eigenvalue {value:.3e} is a zero mode and has no superpartner")]
    ZeroMode { value: f64 },

    #[error("ambiguous zero-mode clustering: largest kernel candidate {kernel:.3e}, smallest positive {positive:.3e}")]
    AmbiguousKernel { kernel: f64, positive: f64 },

    #[error("state is not a normalized eigenvector of I+ with eigenvalue {lambda} (defect {defect:.3e})")]
    NotEigenvector { lambda: f64, defect: f64 },

    #[error("step too large: |H| dt = {product:.3} >= 0.5 at t={t}; use dt <= {suggested:.3e}")]
    StepTooLarge { t: f64, product: f64, suggested: f64 },

    #[error("initial state has norm {norm}, expected 1")]
    NotNormalized { norm: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("eigenvalue crossing near t={t}: level structure changed")]
    LevelCrossing { t: f64 },

    #[error("level {level} out of range ({available} levels)")]
    NoSuchLevel { level: usize, available: usize },

    #[error("loop is not closed (frame mismatch {mismatch:.3e})")]
    OpenLoop { mismatch: f64 },

    #[error("time-ordered exponential requested for a non-commuting Y; not supported")]
    NonCommutingY,

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
