use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("{op}: input outside domain: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("node {node} has degree 0")]
    DegenerateDegree { node: usize },

    #[error("{op}: point off manifold: {detail}")]
    Manifold { op: &'static str, detail: String },

    #[error("tangent-space violation: {0}")]
    TangentSpace(String),

    #[error("numerical instability: {0}")]
    NumericalStability(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("requested {k} eigenvectors but only {available} are available")]
    Rank { k: usize, available: usize },

    #[error("graph is disconnected ({components} components) and per-component mode is off")]
    Connectivity { components: usize },

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Dimension {
        op,
        detail: detail.into(),
    })
}
