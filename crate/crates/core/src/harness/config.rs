//! Run configuration, read from JSON. Every field has a default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lshproto::{DEFAULT_BITS, MAX_BITS};
use crate::sampler::{DEFAULT_GROUP_SIZE, DEFAULT_TOP_CLUSTERS};
use crate::simkernel::{SimilarityConfig, DEFAULT_MAX_TOKENS};
use crate::softmem::{MemoryConfig, DEFAULT_GAMMA, DEFAULT_LAMBDA};
use crate::trainer::{LossSimilarity, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Assignment factor λ.
    pub lambda: f64,
    /// Decaying factor γ.
    pub gamma: f64,
    /// LSH bits per prototype key.
    pub bits: u32,
    /// Number of k-means clusters built from the first session.
    pub init_clusters: usize,
    /// Nearest clusters searched during document selection (`K`).
    #[serde(alias = "K")]
    pub top_clusters: usize,
    /// Training group size: one positive and `k − 1` negatives.
    #[serde(alias = "k")]
    pub group_size: usize,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Maximum token length `L`.
    #[serde(alias = "L")]
    pub max_tokens: usize,
    /// Embedding dimension `d`.
    #[serde(alias = "d")]
    pub dim: usize,
    /// Ranking depth for evaluation (at least 10 is always computed).
    pub top_k: usize,
    /// Documents kept per query by BM25 before memory admission; 0 disables.
    pub bm25_top_n: usize,
    /// Total training queries per session (`N`).
    #[serde(alias = "N")]
    pub query_budget: usize,
    pub loss_similarity: LossSimilarity,
    /// Seed of the frozen token embedder; defaults to the run seed.
    pub base_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            bits: DEFAULT_BITS,
            init_clusters: 12,
            top_clusters: DEFAULT_TOP_CLUSTERS,
            group_size: DEFAULT_GROUP_SIZE,
            tau: train.tau,
            lr: train.lr,
            epochs: train.epochs,
            batch: train.batch,
            max_tokens: DEFAULT_MAX_TOKENS,
            dim: 64,
            top_k: 10,
            bm25_top_n: 50,
            query_budget: 256,
            loss_similarity: LossSimilarity::Cosine,
            base_seed: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(bytes).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.gamma.is_nan() {
            return Err(Error::invalid("lambda and gamma must be numbers"));
        }
        if self.bits > MAX_BITS {
            return Err(Error::invalid(format!("bits must be at most {MAX_BITS}")));
        }
        if self.init_clusters == 0 || self.top_clusters == 0 {
            return Err(Error::invalid("init_clusters and top_clusters must be positive"));
        }
        if self.group_size < 2 {
            return Err(Error::invalid("group_size must be at least 2"));
        }
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be positive"));
        }
        SimilarityConfig::new(self.max_tokens, self.dim)?;
        self.train().validate()
    }

    pub fn similarity(&self) -> SimilarityConfig {
        SimilarityConfig {
            max_tokens: self.max_tokens,
            dim: self.dim,
        }
    }

    pub fn memory(&self) -> MemoryConfig {
        MemoryConfig {
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            tau: self.tau,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            similarity: self.loss_similarity,
        }
    }
}
