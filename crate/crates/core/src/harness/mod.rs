//! Multi-agent workflow harness: agent pools, backends, Vote and Debate.

pub mod agents;
pub mod backend;
pub mod extract;
pub mod mock;
#[cfg(feature = "http")]
pub mod openai;
pub mod task;
pub mod workflow;

use thiserror::Error;

pub use agents::{
    build_layer_pool, AgentConfig, Decoding, DiversityPlan, Layer, Persona, DEFAULT_SYSTEM_PROMPT,
};
pub use backend::{
    fetch_embeddings, BackendError, CallContext, ChatBackend, ChatMessage, ChatRequest,
    EmbeddingBackend, RetryPolicy,
};
pub use extract::{canonicalize_number, extract_answer, TaskFormat};
pub use mock::MockBackend;
pub use task::Task;
pub use workflow::{
    majority, CallRecord, Clock, FixedClock, Harness, SystemClock, Transcript, WorkflowKind,
    WorkflowSpec, DEFAULT_DEBATE_ROUNDS, TRANSCRIPT_SCHEMA,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("insufficient pool: {0}")]
    InsufficientPool(String),
    #[error("invalid layer {0:?} (expected L1, L2, L3 or L4)")]
    InvalidLayer(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no texts to embed")]
    EmptyInput,
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}
