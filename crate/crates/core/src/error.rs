//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`HydeError`]. Variants are
//! grouped by failure domain (validation, file formats, remote calls, IO) so
//! callers can match on what went wrong, and the CLI can additionally wrap an
//! error with the pipeline stage that produced it via [`HydeError::stage`].

use std::path::Path;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, HydeError>;

#[derive(Debug, thiserror::Error)]
pub enum HydeError {
    /// Two vectors (or a vector and an index) disagree on dimensionality.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    /// A vector failed validation (empty, NaN, infinite component, ...).
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    /// A corpus/query record failed validation (empty id, no usable text, ...).
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The same id appeared twice where ids must be unique.
    #[error("duplicate id: {0:?}")]
    DuplicateId(String),

    /// An instruction template is malformed (wrong placeholder count, ...).
    #[error("invalid template: {0}")]
    Template(String),

    /// A configuration value is missing or out of range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A remote backend call failed for good after exhausting retries.
    #[error("remote call failed after {attempts} attempt(s): {message}")]
    Remote { attempts: u32, message: String },

    /// A text file (qrels, run, corpus, queries, cache) is malformed.
    /// `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    /// A binary artifact (index or embedding store) is malformed. `offset` is
    /// the byte position at which decoding failed.
    #[error("{path}: bad binary data at byte {offset}: {message}")]
    Binary {
        path: String,
        offset: u64,
        message: String,
    },

    /// A long-running batch job failed partway through; `completed` records
    /// were durably written before the failure.
    #[error("aborted after {completed} completed record(s): {source}")]
    Aborted {
        completed: usize,
        #[source]
        source: Box<HydeError>,
    },

    /// An error tagged with the pipeline stage that produced it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HydeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HydeError {
    /// Wrap this error with the name of the pipeline stage it occurred in.
    /// Already-staged errors are returned unchanged so nesting stays flat.
    pub fn stage(self, stage: &'static str) -> Self {
        match self {
            HydeError::Stage { .. } => self,
            other => HydeError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Helper for text-format errors: captures path and 1-based line number.
    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        HydeError::Format {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    /// Helper for binary-format errors: captures path and byte offset.
    pub fn binary(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        HydeError::Binary {
            path: path.display().to_string(),
            offset,
            message: message.into(),
        }
    }
}

/// Extension trait to tag any crate `Result` with a pipeline stage.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.stage(stage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_wraps_once() {
        let err = HydeError::EmptyInput("vectors")
            .stage("encode")
            .stage("search");
        match err {
            HydeError::Stage { stage, source } => {
                assert_eq!(stage, "encode");
                assert!(matches!(*source, HydeError::EmptyInput(_)));
            }
            other => panic!("expected staged error, got {other:?}"),
        }
    }

    #[test]
    fn messages_carry_location() {
        let err = HydeError::format(Path::new("runs/a.txt"), 7, "expected 6 fields, got 4");
        assert_eq!(err.to_string(), "runs/a.txt:7: expected 6 fields, got 4");

        let err = HydeError::binary(Path::new("x.idx"), 12, "truncated record");
        assert_eq!(
            err.to_string(),
            "x.idx: bad binary data at byte 12: truncated record"
        );
    }
}
