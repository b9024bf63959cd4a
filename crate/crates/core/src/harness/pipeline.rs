//! Per-session orchestration and evaluation.
//!
//! Each session runs, in order: retrieval of the training queries with the
//! current encoder, optional BM25 admission filter, cluster assignment,
//! end-of-session maintenance, query selection, document selection, encoder
//! update, re-embedding of the memory, and finally evaluation of the
//! held-out queries with the updated encoder.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::bm25::Bm25Index;
use crate::harness::config::RunConfig;
use crate::harness::embeddings::EmbeddingStore;
use crate::harness::metrics::{recall_at_k, success_at_k};
use crate::harness::retrieval::retrieve;
use crate::harness::session::{SessionStream, TextItem};
use crate::lshproto::LshFamily;
use crate::matrix::Matrix;
use crate::sampler::{build_training_set, select_from_pool, TrainingSample};
use crate::simkernel::{EmbeddedItem, ItemKind};
use crate::softmem::{derive_seed, SoftMemory, INIT_WINDOW};
use crate::trainer::{update_encoder, Embed, EncoderAdapter, Granularity, ItemEncoder, RawItem, TrainingGroup};

pub const SUCCESS_K: usize = 5;
pub const RECALL_K: usize = 10;

// Seed stream tags.
const LSH_STREAM: u64 = 0x004c_5348;
const NAIVE_STREAM: u64 = 0x4e41_4956;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Held-out queries against the session's training document pool.
    #[default]
    Shared,
    /// Held-out queries against a held-out document pool.
    Disjoint,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(Self::Shared),
            "disjoint" => Ok(Self::Disjoint),
            _ => Err(Error::invalid(format!("unknown protocol {s:?}"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shared => "shared",
            Self::Disjoint => "disjoint",
        })
    }
}

/// Pipeline variant; everything but `Full` removes one component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Mean-pooled vectors and centroid prototypes instead of token-level
    /// similarity and LSH prototypes.
    NoFinegrained,
    /// The encoder is never updated.
    NoTrain,
    /// No memory: each session's own queries are trained against the
    /// globally most and least cosine-similar session documents.
    NoSoftmem,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Self::Full, Self::NoFinegrained, Self::NoTrain, Self::NoSoftmem];
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-finegrained" => Ok(Self::NoFinegrained),
            "no-train" => Ok(Self::NoTrain),
            "no-softmem" => Ok(Self::NoSoftmem),
            _ => Err(Error::invalid(format!("unknown variant {s:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::NoFinegrained => "no-finegrained",
            Self::NoTrain => "no-train",
            Self::NoSoftmem => "no-softmem",
        })
    }
}

/// One row of the evaluation report. Metrics are percentages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: usize,
    pub train_queries: usize,
    pub train_documents: usize,
    pub admitted_documents: usize,
    /// Success@5 of the training queries before the update (qrels permitting).
    pub online_success_at_5: Option<f64>,
    pub eval_queries: usize,
    pub success_at_5: Option<f64>,
    pub recall_at_10: Option<f64>,
    pub clusters: usize,
    pub memory_documents: usize,
    pub memory_queries: usize,
    pub evicted_documents: usize,
    pub training_samples: usize,
    pub train_steps: u64,
    pub train_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub sessions: usize,
    pub success_at_5: Option<f64>,
    pub recall_at_10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub variant: Variant,
    pub seed: u64,
    pub config: RunConfig,
    pub sessions: Vec<SessionReport>,
    pub average: AverageMetrics,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Session report plus the pseudo-labeled samples it trained on.
#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub report: SessionReport,
    pub samples: Vec<TrainingSample>,
}

pub struct Pipeline {
    cfg: RunConfig,
    variant: Variant,
    protocol: Protocol,
    seed: u64,
    adapter: EncoderAdapter,
    mem: SoftMemory,
    store: Option<EmbeddingStore>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, variant: Variant, protocol: Protocol, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let bits = if variant == Variant::NoFinegrained { 0 } else { cfg.bits };
        let fam = LshFamily::new(bits, cfg.dim, derive_seed(seed, LSH_STREAM, 0))?;
        let mem = SoftMemory::new(cfg.memory(), cfg.similarity(), fam, seed)?;
        let adapter = EncoderAdapter::new(cfg.dim, cfg.base_seed.unwrap_or(seed))?;
        Ok(Self {
            cfg,
            variant,
            protocol,
            seed,
            adapter,
            mem,
            store: None,
        })
    }

    /// Uses precomputed base embeddings for every id the store knows.
    pub fn with_embeddings(mut self, store: EmbeddingStore) -> Result<Self> {
        if store.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                actual: store.dim(),
            });
        }
        self.store = Some(store);
        Ok(self)
    }

    /// Replaces the initial adapter, e.g. from a checkpoint.
    pub fn with_adapter(mut self, adapter: EncoderAdapter) -> Result<Self> {
        if adapter.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                actual: adapter.dim(),
            });
        }
        self.adapter = adapter;
        Ok(self)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &SoftMemory {
        &self.mem
    }

    pub fn adapter(&self) -> &EncoderAdapter {
        &self.adapter
    }

    pub fn granularity(&self) -> Granularity {
        match self.variant {
            Variant::NoFinegrained => Granularity::Pooled,
            _ => Granularity::Token,
        }
    }

    fn encoder(&self) -> ItemEncoder<'_> {
        ItemEncoder {
            adapter: &self.adapter,
            granularity: self.granularity(),
        }
    }

    fn raw(&self, item: &TextItem) -> Result<RawItem> {
        if let Some(rows) = self.store.as_ref().and_then(|s| s.get(&item.id)) {
            let n = rows.rows().min(self.cfg.max_tokens);
            let base = Matrix::from_vec(n, rows.cols(), rows.as_slice()[..n * rows.cols()].to_vec())?;
            return Ok(RawItem {
                id: item.id.clone(),
                kind: item.kind,
                tokens: item.tokens.iter().take(self.cfg.max_tokens).cloned().collect(),
                base,
            });
        }
        self.adapter.raw_item(item.id.clone(), item.kind, &item.tokens, self.cfg.max_tokens)
    }

    fn prepare(&self, items: &[&TextItem], enc: &impl Embed) -> Result<Vec<(Arc<RawItem>, EmbeddedItem)>> {
        items
            .iter()
            .map(|it| {
                let raw = Arc::new(self.raw(it)?);
                let emb = enc.embed(&raw)?;
                Ok((raw, emb))
            })
            .collect()
    }

    /// Runs every session in order and collects the report.
    pub fn run(&mut self, sessions: &[SessionStream]) -> Result<EvalReport> {
        let mut rows = Vec::with_capacity(sessions.len());
        for s in sessions {
            rows.push(self.run_session(s)?.report);
        }
        Ok(self.report(rows))
    }

    pub fn report(&self, sessions: Vec<SessionReport>) -> EvalReport {
        let s5: Vec<f64> = sessions.iter().filter_map(|r| r.success_at_5).collect();
        let r10: Vec<f64> = sessions.iter().filter_map(|r| r.recall_at_10).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        EvalReport {
            protocol: self.protocol,
            variant: self.variant,
            seed: self.seed,
            config: self.cfg.clone(),
            average: AverageMetrics {
                sessions: s5.len(),
                success_at_5: mean(&s5),
                recall_at_10: mean(&r10),
            },
            sessions,
        }
    }

    pub fn run_session(&mut self, stream: &SessionStream) -> Result<SessionOutcome> {
        self.run_session_inner(stream).map_err(|e| e.in_session(stream.index))
    }

    fn run_session_inner(&mut self, stream: &SessionStream) -> Result<SessionOutcome> {
        let t = stream.index;
        let mut clock = Instant::now();
        let mut lap = |stage: &str| {
            log::debug!("session {t}: {stage} {:.3}s", clock.elapsed().as_secs_f64());
            clock = Instant::now();
        };
        let mut report = SessionReport {
            session: t,
            ..SessionReport::default()
        };
        let train_items: Vec<&TextItem> = stream.train.iter().collect();
        let prepared = self.prepare(&train_items, &self.encoder())?;
        let doc_idx: Vec<usize> = (0..prepared.len())
            .filter(|&i| prepared[i].1.kind == ItemKind::Document)
            .collect();
        let query_idx: Vec<usize> = (0..prepared.len())
            .filter(|&i| prepared[i].1.kind == ItemKind::Query)
            .collect();
        report.train_queries = query_idx.len();
        report.train_documents = doc_idx.len();
        lap("embed");

        // Retrieval with the pre-update encoder.
        let docs: Vec<&EmbeddedItem> = doc_idx.iter().map(|&i| &prepared[i].1).collect();
        let doc_ids: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        if !docs.is_empty() {
            let queries: Vec<&EmbeddedItem> = query_idx.iter().map(|&i| &prepared[i].1).collect();
            report.online_success_at_5 = evaluate(&queries, &docs, &doc_ids, stream, self.cfg.top_k)?.0;
        }

        lap("retrieve");

        // BM25 admission.
        let admitted: BTreeSet<&str> = if self.cfg.bm25_top_n > 0 && !query_idx.is_empty() && !docs.is_empty() {
            let corpus: Vec<(&str, Vec<String>)> = doc_idx
                .iter()
                .map(|&i| (prepared[i].0.id.as_str(), stream.train[i].tokens.clone()))
                .collect();
            let index = Bm25Index::new(&corpus);
            let per_query: Vec<Vec<String>> = query_idx
                .par_iter()
                .map(|&i| index.top_n(&stream.train[i].tokens, self.cfg.bm25_top_n))
                .collect();
            let keep: BTreeSet<String> = per_query.into_iter().flatten().collect();
            doc_ids.iter().copied().filter(|id| keep.contains(*id)).collect()
        } else {
            doc_ids.clone()
        };
        report.admitted_documents = admitted.len();
        lap("prefilter");

        // Memory update.
        if self.variant != Variant::NoSoftmem {
            let stream_items: Vec<(Arc<RawItem>, EmbeddedItem)> = prepared
                .iter()
                .filter(|(raw, _)| raw.kind == ItemKind::Query || admitted.contains(raw.id.as_str()))
                .cloned()
                .collect();
            let mut rest = &stream_items[..];
            if !self.mem.is_initialized() && !stream_items.is_empty() {
                let window = stream_items.len().min(INIT_WINDOW);
                let k = self.cfg.init_clusters.min(window);
                self.mem.init_clusters(&stream_items[..window], k)?;
                rest = &stream_items[window..];
            }
            for (raw, emb) in rest {
                self.mem.assign(Arc::clone(raw), emb.clone())?;
            }
            lap("assign");
            if self.mem.is_initialized() {
                let enc = ItemEncoder {
                    adapter: &self.adapter,
                    granularity: self.granularity(),
                };
                let stats = self.mem.maintain(&enc, t)?;
                report.evicted_documents = stats.evicted_docs;
            }
            lap("maintain");
        }

        // Training.
        let samples = if self.variant == Variant::NoTrain || query_idx.is_empty() {
            Vec::new()
        } else if self.variant == Variant::NoSoftmem {
            self.naive_samples(&prepared, &query_idx, &doc_idx, t)?
        } else if self.mem.is_initialized() {
            build_training_set(
                &self.mem,
                self.cfg.query_budget,
                self.cfg.top_clusters,
                self.cfg.group_size,
                self.seed,
                t,
            )?
        } else {
            Vec::new()
        };
        report.training_samples = samples.len();
        lap("sample");
        if !samples.is_empty() {
            let mut lookup: HashMap<&str, &RawItem> =
                prepared.iter().map(|(r, _)| (r.id.as_str(), r.as_ref())).collect();
            for c in self.mem.clusters() {
                for m in c.docs().chain(c.queries()) {
                    lookup.insert(m.raw.id.as_str(), m.raw.as_ref());
                }
            }
            let resolve = |id: &str| lookup.get(id).copied().ok_or_else(|| Error::UnknownItem(id.to_string()));
            let doc_lists: Vec<Vec<&RawItem>> = samples
                .iter()
                .map(|s| s.doc_ids().map(&resolve).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?;
            let groups: Vec<TrainingGroup<'_>> = samples
                .iter()
                .zip(&doc_lists)
                .map(|(s, docs)| {
                    Ok(TrainingGroup {
                        query: resolve(&s.query_id)?,
                        docs,
                    })
                })
                .collect::<Result<_>>()?;
            let (next, stats) = update_encoder(&groups, &self.adapter, &self.cfg.train())?;
            report.train_steps = stats.steps;
            report.train_loss = Some(stats.mean_loss);
            self.adapter = next;
            if self.mem.is_initialized() {
                let enc = ItemEncoder {
                    adapter: &self.adapter,
                    granularity: self.granularity(),
                };
                self.mem.reembed(&enc)?;
            }
        }
        lap("train");
        report.clusters = self.mem.cluster_count();
        report.memory_documents = self.mem.doc_count();
        report.memory_queries = self.mem.query_count();

        // Evaluation with the updated encoder.
        let eval_queries: Vec<&TextItem> = stream.eval_queries().collect();
        if !eval_queries.is_empty() {
            let pool_items: Vec<&TextItem> = match self.protocol {
                Protocol::Shared => stream.train_documents().collect(),
                Protocol::Disjoint => stream.eval_documents().collect(),
            };
            let enc = self.encoder();
            let q = self.prepare(&eval_queries, &enc)?;
            let p = self.prepare(&pool_items, &enc)?;
            let queries: Vec<&EmbeddedItem> = q.iter().map(|x| &x.1).collect();
            let pool: Vec<&EmbeddedItem> = p.iter().map(|x| &x.1).collect();
            let pool_ids: BTreeSet<&str> = pool.iter().map(|d| d.id.as_str()).collect();
            if !pool.is_empty() {
                let (s5, r10, n) = evaluate(&queries, &pool, &pool_ids, stream, self.cfg.top_k)?;
                report.success_at_5 = s5;
                report.recall_at_10 = r10;
                report.eval_queries = n;
            }
        }
        lap("evaluate");
        Ok(SessionOutcome { report, samples })
    }

    /// Memory-free pseudo-labels: each session query against all session
    /// documents by pooled cosine.
    fn naive_samples(
        &self,
        prepared: &[(Arc<RawItem>, EmbeddedItem)],
        query_idx: &[usize],
        doc_idx: &[usize],
        session: usize,
    ) -> Result<Vec<TrainingSample>> {
        let pooled = ItemEncoder {
            adapter: &self.adapter,
            granularity: Granularity::Pooled,
        };
        let mut chosen: Vec<usize> = query_idx.to_vec();
        if chosen.len() > self.cfg.query_budget {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, session as u64, NAIVE_STREAM));
            chosen.shuffle(&mut rng);
            chosen.truncate(self.cfg.query_budget);
            chosen.sort_unstable();
        }
        let docs: Vec<EmbeddedItem> = doc_idx
            .iter()
            .map(|&i| pooled.embed(&prepared[i].0))
            .collect::<Result<_>>()?;
        if docs.len() < self.cfg.group_size {
            log::warn!("session {session}: {} documents, too few for training groups", docs.len());
            return Ok(Vec::new());
        }
        let pool: Vec<&EmbeddedItem> = docs.iter().collect();
        chosen
            .par_iter()
            .map(|&i| {
                let q = pooled.embed(&prepared[i].0)?;
                select_from_pool(&q, &pool, self.cfg.group_size)
            })
            .collect()
    }
}

/// Average Success@5 and Recall@10 (percent) over queries with relevant
/// documents in `pool`, plus the number of such queries.
fn evaluate(
    queries: &[&EmbeddedItem],
    pool: &[&EmbeddedItem],
    pool_ids: &BTreeSet<&str>,
    stream: &SessionStream,
    top_k: usize,
) -> Result<(Option<f64>, Option<f64>, usize)> {
    let depth = top_k.max(RECALL_K);
    let rows: Vec<Option<(f64, f64)>> = queries
        .iter()
        .map(|q| {
            let relevant: BTreeSet<String> = stream
                .relevant(&q.id)
                .map(|r| r.iter().filter(|d| pool_ids.contains(d.as_str())).cloned().collect())
                .unwrap_or_default();
            if relevant.is_empty() {
                log::debug!("query {} has no relevant documents in the pool; excluded", q.id);
                return Ok(None);
            }
            let ranked: Vec<String> = retrieve(q, pool, depth)?.into_iter().map(|h| h.id).collect();
            Ok(success_at_k(&ranked, &relevant, SUCCESS_K).zip(recall_at_k(&ranked, &relevant, RECALL_K)))
        })
        .collect::<Result<_>>()?;
    let scored: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    if scored.is_empty() {
        return Ok((None, None, 0));
    }
    let n = scored.len() as f64;
    let s5 = 100.0 * scored.iter().map(|r| r.0).sum::<f64>() / n;
    let r10 = 100.0 * scored.iter().map(|r| r.1).sum::<f64>() / n;
    Ok((Some(s5), Some(r10), scored.len()))
}
