use thiserror::Error;

/// Errors raised by the solvers and their input validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("index {index} outside the interior range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error(
        "CFL condition violated: k * d / h^2 = {ratio:.6e} > 1 (k = {k:.6e}, h = {h:.6e}, cap_d = {cap_d:.6e}); \
         need k <= {bound:.6e}"
    )]
    Cfl {
        k: f64,
        h: f64,
        cap_d: f64,
        ratio: f64,
        bound: f64,
    },

    #[error("{solver} did not converge within {iterations} iterations at time level {level} (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        level: usize,
        residual: f64,
    },

    #[error("zero pivot in tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },

    #[error("Newton damping underflowed at time level {level}: iterate cannot be kept positive")]
    DampingUnderflow { level: usize },

    #[error("lateral boundary value {value:e} at (m = {m}, n = {n}) must be zero")]
    BoundaryViolation { m: usize, n: usize, value: f64 },

    #[error("ladder monotonicity violated between n = {lower} and n = {upper} at (m = {m}, n = {node}) by {excess:.3e}")]
    LadderMonotonicity {
        lower: u32,
        upper: u32,
        m: usize,
        node: usize,
        excess: f64,
    },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("time {t} is not a grid level (k = {k})")]
    OffGrid { t: f64, k: f64 },

    #[error("negative density {value:e} at (m = {m}, n = {n})")]
    NegativeDensity { m: usize, n: usize, value: f64 },

    #[error("control queried outside its domain at (t = {t}, x = {x})")]
    OutOfDomain { t: f64, x: f64 },
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// True for input-validation failures, false for numerical ones.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Shape { .. }
                | Error::IndexOutOfRange { .. }
                | Error::Cfl { .. }
                | Error::GridMismatch(_)
                | Error::OffGrid { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
