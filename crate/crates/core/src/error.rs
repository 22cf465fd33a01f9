use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Representation spec string did not match the grammar.
    #[error("invalid representation spec at `{span}`: {msg}")]
    RepParse { span: String, msg: String },

    /// A feature block or matrix had the wrong width for its contract.
    #[error("width mismatch in {context}: expected {expected}, got {got}")]
    WidthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Ambient dimensions do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A matrix failed an orthogonality check.
    #[error("matrix not orthogonal within {tol}: max residual {residual}")]
    NotOrthogonal { tol: f64, residual: f64 },

    /// Inputs to frame completion were not orthonormal.
    #[error("frame completion inputs not orthonormal: {0}")]
    NotOrthonormal(String),

    /// An index or count argument was out of its valid range.
    #[error("{context}: {msg}")]
    OutOfRange { context: &'static str, msg: String },

    /// Pipeline or task configuration is inconsistent.
    #[error("config error{}: {msg}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    Config { layer: Option<usize>, msg: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed point-cloud or checkpoint file.
    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
