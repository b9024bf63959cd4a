//! Continual dense retrieval over a stream of unlabeled sessions.
//!
//! A soft memory of topic clusters is kept over streamed queries and
//! documents. Each cluster carries an LSH-bucketed prototype and a running
//! summary of member distances, which drive admission and eviction. The
//! memory supplies pseudo-labeled training groups for a contrastive update
//! of the encoder after every session.

pub mod error;
pub mod harness;
pub mod lshproto;
pub mod matrix;
pub mod sampler;
pub mod simkernel;
pub mod snapshot;
pub mod softmem;
pub mod trainer;

pub use error::{Error, Result};
pub use lshproto::{sufficient_bits, ClusterPrototype, LshFamily};
pub use matrix::Matrix;
pub use simkernel::{maxsim, pooled_embedding, sim_dist, EmbeddedItem, ItemKind, SimilarityConfig};
pub use softmem::{ClusterSummary, MemoryConfig, SoftMemory};
pub use trainer::{EncoderAdapter, TrainConfig};
