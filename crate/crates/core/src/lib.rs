//! Domain-topic cartography of document corpora.
//!
//! Documents and terms are clustered jointly by fitting a nested
//! degree-corrected stochastic block model to the bipartite document-term
//! graph, choosing the partition hierarchy of minimal description length.
//! Metadata dimensions are clustered afterwards by chaining: the document
//! hierarchy is frozen and only metadata values are partitioned. The fitted
//! hierarchies feed block-characterization measures, domain-topic tables and
//! an exportable map bundle.

pub mod chained;
pub mod corpus;
pub mod dl;
pub mod error;
pub mod fit;
pub mod graph;
pub mod hash;
pub mod lnfact;
pub mod mapexport;
pub mod measures;
pub mod model;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod partition;
pub mod report;
pub mod serve;
pub mod state;
pub mod synth;

pub use error::{Error, Result};
pub use fit::{fit, Acceptance, FitConfig, FitOutcome};
pub use model::{Model, ModelKind};
pub use graph::{BipartiteGraph, Side};
pub use partition::{BlockCodes, BlockKind, BlockRef, CrossMatrix, NestedPartition};
pub use state::{NestedState, Target};
