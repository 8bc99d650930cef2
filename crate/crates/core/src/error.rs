use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum DicrError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error in dialog `{dialog_id}`, field `{field}`: {msg}")]
    Schema {
        dialog_id: String,
        field: String,
        msg: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown {kind}: {name}")]
    Lookup { kind: &'static str, name: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("stage `{stage}` requires the `{missing}` stage checkpoint, which was not found")]
    Ordering { stage: String, missing: String },

    #[error("interrupted during the `{0}` stage; partial checkpoint kept")]
    Interrupted(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("version error: {0}")]
    Version(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, DicrError>;

impl DicrError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        DicrError::Config(msg.into())
    }

    pub(crate) fn path(path: &std::path::Path, source: std::io::Error) -> Self {
        DicrError::Path {
            path: path.display().to_string(),
            source,
        }
    }
}
