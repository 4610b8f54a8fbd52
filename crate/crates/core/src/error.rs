use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the kernel, the permutation engine, the loaders and
/// the analysis layer. Every variant that refers to data carries enough
/// location information (id, row, byte offset, test id) to find it.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch{}: expected {expected}, found {found}", location(.id, .row))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        id: Option<String>,
        row: Option<usize>,
    },

    #[error("zero vector{}", id.as_deref().map(|i| format!(" `{i}`")).unwrap_or_default())]
    ZeroVector { id: Option<String> },

    #[error("non-finite component in `{id}` at index {index}")]
    NonFinite { id: String, index: usize },

    #[error("concept set `{name}` is empty")]
    EmptyConceptSet { name: String },

    #[error("duplicate id `{id}` in concept set `{set}`")]
    DuplicateId { id: String, set: String },

    #[error("test {test_id}: target sets differ in size (|X| = {x}, |Y| = {y})")]
    UnequalTargets { test_id: String, x: usize, y: usize },

    #[error("test {test_id}: stimulus `{id}` appears in both target sets")]
    OverlappingTargets { test_id: String, id: String },

    #[error("test {test_id}: concept `{name}` has role {found:?}, expected {expected:?}")]
    RoleMismatch {
        test_id: String,
        name: String,
        expected: crate::model::Role,
        found: crate::model::Role,
    },

    #[error("partition count C({n}, {k}) overflows 64-bit counting")]
    Overflow { n: usize, k: usize },

    #[error("all pooled association scores are equal; effect size undefined")]
    DegenerateVariance,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: parse error at line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: bad magic bytes {found:?}", path.display())]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{}: unsupported container version {version}", path.display())]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{}: truncated record {record} at byte offset {offset}", path.display())]
    TruncatedRecord {
        path: PathBuf,
        record: usize,
        offset: u64,
    },

    #[error("missing concept `{name}`: {reason}")]
    MissingConcept { name: String, reason: String },

    #[error("concept `{name}` has dimension {found}, suite expects {expected}")]
    InconsistentDimension {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("oracle enumeration too large: C({n}, {k}) exceeds {limit}")]
    TooLarge { n: usize, k: usize, limit: u64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: Arc<std::io::Error>,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: Arc<serde_json::Error>,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: Arc<csv::Error>,
    },

    #[error("{}: {message} (byte offset {offset})", path.display())]
    Malformed {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("test {test_id}: {source}")]
    InTest {
        test_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn location(id: &Option<String>, row: &Option<usize>) -> String {
    match (id, row) {
        (Some(id), Some(row)) => format!(" at row {row} (`{id}`)"),
        (Some(id), None) => format!(" for `{id}`"),
        (None, Some(row)) => format!(" at row {row}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn in_test(self, test_id: impl Into<String>) -> Self {
        match self {
            e @ Error::InTest { .. } => e,
            e => Error::InTest {
                test_id: test_id.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips `InTest` / `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InTest { source, .. } | Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// Whether this error comes from bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_) | Error::EmptyInput(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source: Arc::new(source),
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source: Arc::new(source),
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source: Arc::new(source),
        }
    }
}
