//! Error type shared by every estimation, calibration and solver routine.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch for {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// Input contains NaN or infinite values.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Malformed or incomplete data file.
    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("number of factors {k} out of range 1..={max}")]
    FactorCountOutOfRange { k: usize, max: usize },

    /// Every entry of the return panel is zero.
    #[error("degenerate panel: all returns are zero")]
    DegeneratePanel,

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    /// No threshold constant on the grid yields a positive definite
    /// training covariance on every fold.
    #[error("no threshold constant on the grid gives a positive definite residual covariance (fold {fold} fails at C = {c})")]
    ThresholdNotPositiveDefinite { fold: usize, c: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is not positive semidefinite: {context} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite {
        context: &'static str,
        min_eigenvalue: f64,
    },

    /// The squared factor-mean norm is at least one, which cannot happen
    /// for PCA factors normalized to unit second moment.
    #[error("factor mean inconsistent with normalization: mean'mean = {0}")]
    FactorMeanInconsistent(f64),

    /// Mean vector (nearly) collinear with the vector of ones.
    #[error("ill-posed mean-variance system: A4 = {a4:e} relative to A2*A3 = {scale:e}")]
    IllPosedMeanVariance { a4: f64, scale: f64 },

    /// Sample covariance cannot be inverted (p >= window).
    #[error("sample covariance is singular ({p} assets, {t} periods); use the mv_poet strategy instead")]
    SingularSampleCovariance { p: usize, t: usize },

    /// Robust feasible region is empty.
    #[error("infeasible allocation: rho = {rho:e} exceeds the largest feasible value {g_bar}")]
    Infeasible { rho: f64, g_bar: String },

    /// Estimation failed inside one backtest window.
    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Whether the error stems from the input data rather than from the
    /// configuration or the library itself.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::Data { .. }
            | Error::DegeneratePanel
            | Error::Eigen(_)
            | Error::ThresholdNotPositiveDefinite { .. }
            | Error::NotPositiveDefinite(_)
            | Error::NotPositiveSemidefinite { .. }
            | Error::FactorMeanInconsistent(_)
            | Error::IllPosedMeanVariance { .. }
            | Error::SingularSampleCovariance { .. }
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::Window { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
