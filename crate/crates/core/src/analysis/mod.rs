//! Measurement tables built from transcript stores.

pub mod ols;
pub mod report;
pub mod stats;
pub mod summary;

use thiserror::Error;

pub use ols::{ols_fit, ols_incremental_r2, FeatureMatrix, OlsFit, RegressionReport};
pub use report::{build_report, load_store, load_stores, write_report, LoadedStore, Report, ReportOptions};
pub use stats::{average_ranks, pearson_r, permutation_test, permutation_test_with, spearman_rho, PermutationReport};
pub use summary::{
    agents_to_match, boundary_classification, marginal_gains, summarize_runs, AgentsToMatch,
    BoundaryReport, BoundaryRow, KStarMode, RunSummary, Side, TranscriptEntry,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need at least two points")]
    NeedTwoPoints,
    #[error("empty series")]
    EmptySeries,
    #[error("design matrix is singular even with ridge jitter")]
    SingularDesign,
    #[error("missing embeddings for task {0}")]
    MissingEmbeddings(String),
    #[error("store contains no transcripts")]
    EmptyStore,
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(String),
}
