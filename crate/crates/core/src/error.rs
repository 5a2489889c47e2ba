use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("document `{0}` has an empty metadata dimension name")]
    EmptyDimensionName(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("unknown metadata dimension `{dimension}`; available: [{}]", available.join(", "))]
    UnknownDimension {
        dimension: String,
        available: Vec<String>,
    },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("node {node} and target block {block} are on different sides")]
    CrossSideMove { node: usize, block: usize },

    #[error("unknown block {0}")]
    UnknownBlock(String),

    #[error("invalid block code `{0}` (expected L<level><D|T|P|M><index>)")]
    BadBlockCode(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("block {0} has no edges; its usage distribution is undefined")]
    ZeroEdgeBlock(String),

    #[error("block {0} has no superblock to measure against")]
    NoLadder(String),

    #[error("block {0} has no subblocks")]
    NoChildren(String),

    #[error("absolute continuity violated for {block} on target {target}")]
    AbsoluteContinuity { block: String, target: String },

    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("artifact kind mismatch: expected {expected}, found {found}")]
    ArtifactKind { expected: String, found: String },

    #[error("artifact consistency check failed: {0}")]
    Inconsistent(String),

    #[error("upstream hash mismatch: artifact expects {expected}, got {found}")]
    HashMismatch { expected: String, found: String },

    #[error("metadata graph references documents unknown to the domain model: {0:?}")]
    UnknownDocuments(Vec<String>),

    #[error("selection is empty ({0})")]
    EmptySelection(String),

    #[error("period {0} contains no documents")]
    EmptyPeriod(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("server error: {0}")]
    Server(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable short name used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateDocument(_) => "duplicate_document",
            Error::EmptyDimensionName(_) => "empty_dimension_name",
            Error::EmptyCorpus => "empty_corpus",
            Error::UnknownDimension { .. } => "unknown_dimension",
            Error::EmptyGraph => "empty_graph",
            Error::CrossSideMove { .. } => "cross_side_move",
            Error::UnknownBlock(_) => "unknown_block",
            Error::BadBlockCode(_) => "bad_block_code",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::Invariant(_) => "invariant",
            Error::ZeroEdgeBlock(_) => "zero_edge_block",
            Error::NoLadder(_) => "no_ladder",
            Error::NoChildren(_) => "no_children",
            Error::AbsoluteContinuity { .. } => "absolute_continuity",
            Error::SchemaVersion { .. } => "schema_version",
            Error::ArtifactKind { .. } => "artifact_kind",
            Error::Inconsistent(_) => "inconsistent_artifact",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::UnknownDocuments(_) => "unknown_documents",
            Error::EmptySelection(_) => "empty_selection",
            Error::EmptyPeriod(_) => "empty_period",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Server(_) => "server",
        }
    }
}
