//! Session orchestration, evaluation and data ingestion.

pub mod bm25;
pub mod config;
pub mod embeddings;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod session;
pub mod synth;
pub mod text;

pub use bm25::{bm25_prefilter, Bm25Index};
pub use config::RunConfig;
pub use embeddings::EmbeddingStore;
pub use metrics::{recall_at_k, success_at_k};
pub use pipeline::{EvalReport, Pipeline, Protocol, SessionReport, Variant};
pub use retrieval::{retrieve, retrieve_pruned, Hit};
pub use session::{load_sessions, parse_session, write_sessions, SessionStream, TextItem};
pub use synth::{generate_synthetic_stream, SynthConfig};
pub use text::tokenize;
