use std::path::PathBuf;

use thiserror::Error;

/// Which kind of tie makes the stereographic kernel singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieKind {
    Coincident,
    Antipodal,
}

impl std::fmt::Display for TieKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TieKind::Coincident => f.write_str("coincident"),
            TieKind::Antipodal => f.write_str("antipodal"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("kernel is singular at theta = {theta} (angle must lie strictly inside (0, pi))")]
    SingularKernel { theta: f64 },

    /// 0-based row indices of the offending pair.
    #[error("{kind} tie between rows {i} and {j}: the statistic is not defined in the presence of ties")]
    Tie { i: usize, j: usize, kind: TieKind },

    #[error(
        "the weighted chi-square series is not summable for q = {q}: \
         the kernel has infinite second moment, use the truncated statistic or exact-n calibration"
    )]
    NonSummable { q: usize },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e} after {evaluations} evaluations")]
    Quadrature {
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("derivative of order {order} not available (stored up to {stored})")]
    DerivativeOrder { order: usize, stored: usize },

    #[error("rejection envelope could not be computed: {0}")]
    Envelope(String),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("experiment refused: estimated {estimated_pairs:.3e} pair evaluations exceeds budget {budget:.3e}")]
    Infeasible { estimated_pairs: f64, budget: f64 },

    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("cache file {path:?} is corrupt: {detail}")]
    Cache { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
