//! Domain adaptation for dense retrieval by PCA compression of embeddings.
//!
//! The crate fits a PCA projection on target-domain embeddings (queries only,
//! or queries together with documents), re-ranks documents by cosine
//! similarity in the reduced space, and provides the evaluation tooling used
//! to judge whether the projection helps: IR metrics, variant comparison,
//! retention sweeps, cross-validation, eigenvalue-spectrum diagnostics and
//! paraphrase-based domain familiarity.
//!
//! All arithmetic is done in `f64`; embeddings are stored as `f32` on disk.

pub mod error;
pub mod experiments;
pub mod familiarity;
pub mod metrics;
pub mod pca;
pub mod retrieval;
pub mod spectrum;
pub mod store;

pub use error::{Error, Result};
pub use experiments::{ComparisonRow, ExperimentConfig, Variant};
pub use metrics::MetricsReport;
pub use pca::{FitSource, PcaModel, RetentionSpec};
pub use retrieval::{RankedList, RetrievalRun};
pub use spectrum::SpectrumFit;
pub use store::{EmbeddingMatrix, Qrels};

/// Default cutoff for top-k retrieval and @k metrics.
pub const DEFAULT_K: usize = 10;
/// Default retention ratio.
pub const DEFAULT_RATIO: f64 = 0.9;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_FOLDS: usize = 3;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
