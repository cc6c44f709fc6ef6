use crate::model::FeatureType;

/// Errors produced by parsing, validation and scoring.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("name {0:?} has no usable alphabetic content")]
    EmptyName(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("duplicate mention id {0:?}")]
    DuplicateMentionId(String),
    #[error("invalid clustering: {0}")]
    InvalidClustering(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("feature {feature:?} ({ftype}) is absent from the supplied counts")]
    MissingFeature { ftype: FeatureType, feature: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("unknown weight preset {0:?}")]
    UnknownPreset(String),
    #[error("mention sets differ: {0}")]
    MentionSetMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
