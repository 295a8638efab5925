use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A ring or polygon violates the geometry invariants. `feature` names the
    /// offending input feature when the error comes from a parser.
    #[error("{}", degenerate_message(.feature, .reason))]
    DegenerateGeometry {
        feature: Option<String>,
        reason: String,
    },

    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("grade out of range: {key} = {value} (expected an integer 0-3)")]
    GradeOutOfRange { key: String, value: String },

    #[error("spatial index does not match the instance list: {0}")]
    IndexMismatch(String),

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("placement failure: {0}")]
    PlacementFailure(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

fn degenerate_message(feature: &Option<String>, reason: &str) -> String {
    match feature {
        Some(id) => format!("degenerate geometry in feature `{id}`: {reason}"),
        None => format!("degenerate geometry: {reason}"),
    }
}

impl Error {
    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateGeometry {
            feature: None,
            reason: reason.into(),
        }
    }

    /// Attach a feature id to a geometry error; other variants pass through.
    pub fn in_feature(self, id: &str) -> Self {
        match self {
            Error::DegenerateGeometry { reason, .. } => Error::DegenerateGeometry {
                feature: Some(id.to_string()),
                reason,
            },
            other => other,
        }
    }
}
