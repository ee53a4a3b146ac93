use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid angular momentum: {0}")]
    InvalidAngularMomentum(String),

    #[error("selection rule violated: m_e = {m_excited} is not m_g + q = {m_ground} + {q}")]
    SelectionRule { m_ground: f64, m_excited: f64, q: i32 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hamiltonian is not hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("steady state is not unique: generator null space has dimension {null_dim}")]
    RankDeficient { null_dim: usize },

    #[error("steady state residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotSteady { residual: f64, tolerance: f64 },

    #[error("resolvent is near singular at omega = {omega} (pivot ratio {pivot_ratio:e})")]
    SingularResolvent { omega: f64, pivot_ratio: f64 },

    #[error("slice too thick: |T - I| = {deviation:.3} > {limit}; raise n_slices")]
    SliceTooThick { deviation: f64, limit: f64 },

    #[error("field covariance violates the uncertainty bound (det = {det})")]
    Unphysical { det: f64 },

    #[error("trace has {0} samples, at least 16 are required")]
    TooFewSamples(usize),

    #[error("metadata mismatch between trace and shot reference: {0}")]
    MetadataMismatch(String),

    #[error("malformed trace file: {0}")]
    TraceFormat(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
