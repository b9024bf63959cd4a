//! Synthetic drifting session streams.
//!
//! Each topic owns a vocabulary of concepts. A concept has a head term
//! `t{topic}c{concept}` and `related_per_concept` related terms
//! `t{topic}c{concept}r{j}`. A text mentions a concept either verbatim (head
//! plus related terms) or as a paraphrase (related terms only). Queries name
//! concepts by their heads. A shared pool of generic tokens (`g{j}`) is
//! mixed into every text.
//!
//! Session `t` trains on the new topic `P[t]` and the recurring topic
//! `P[t−1]` of a seeded permutation `P`; its held-out split carries the
//! dropped topic `P[t−2]`, the ongoing topic `P[t−1]` and the new topic
//! `P[t]`.
//!
//! A relevant document repeats at least `min_overlap` of its query's
//! distinct tokens verbatim, topic heads first, and paraphrases the rest of
//! the query's concepts.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::session::{SessionStream, TextItem};
use crate::simkernel::ItemKind;
use crate::softmem::derive_seed;

const PERM_STREAM: u64 = 0x5045_524d;
const SESSION_STREAM: u64 = 0x5345_5353;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub topics: usize,
    pub sessions: usize,
    /// Training documents per session.
    pub docs_per_session: usize,
    pub train_queries_per_topic: usize,
    pub eval_queries_per_topic: usize,
    pub relevant_per_query: usize,
    /// Held-out background documents per evaluation topic.
    pub eval_background_per_topic: usize,
    pub concepts_per_topic: usize,
    pub related_per_concept: usize,
    pub generic_vocab: usize,
    pub query_concepts: usize,
    pub query_generic: usize,
    /// Concepts mentioned per document.
    pub doc_concepts: usize,
    pub doc_generic: usize,
    pub min_overlap: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            sessions: 10,
            docs_per_session: 300,
            train_queries_per_topic: 15,
            eval_queries_per_topic: 40,
            relevant_per_query: 2,
            eval_background_per_topic: 40,
            concepts_per_topic: 10,
            related_per_concept: 1,
            generic_vocab: 8,
            query_concepts: 3,
            query_generic: 0,
            doc_concepts: 3,
            doc_generic: 2,
            min_overlap: 0.6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics < 3 {
            return Err(Error::invalid("synthetic stream needs at least 3 topics"));
        }
        if self.sessions < 2 {
            return Err(Error::invalid("synthetic stream needs at least 2 sessions"));
        }
        if self.relevant_per_query == 0 {
            return Err(Error::invalid("relevant_per_query must be positive"));
        }
        if self.query_concepts == 0 || self.query_concepts > self.concepts_per_topic {
            return Err(Error::invalid("query_concepts must be in 1..=concepts_per_topic"));
        }
        if self.doc_concepts < self.query_concepts || self.doc_concepts > self.concepts_per_topic {
            return Err(Error::invalid("doc_concepts must be in query_concepts..=concepts_per_topic"));
        }
        if self.query_generic > self.generic_vocab || self.doc_generic > self.generic_vocab {
            return Err(Error::invalid("generic token counts exceed the generic vocabulary"));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::invalid("min_overlap must be in (0, 1]"));
        }
        let relevant = self
            .train_queries_per_topic
            .checked_add(self.eval_queries_per_topic)
            .and_then(|q| q.checked_mul(self.relevant_per_query))
            .and_then(|r| r.checked_mul(2))
            .ok_or_else(|| Error::invalid("query and relevance counts overflow"))?;
        if self.docs_per_session < relevant {
            return Err(Error::invalid(format!(
                "docs_per_session {} is below the {relevant} relevant documents a session needs",
                self.docs_per_session
            )));
        }
        Ok(())
    }
}

/// Topic schedule of session `t` under permutation `perm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionTopics {
    pub new: usize,
    pub recurring: usize,
    pub dropped: usize,
}

pub fn session_topics(perm: &[usize], t: usize) -> SessionTopics {
    let n = perm.len();
    SessionTopics {
        new: perm[t % n],
        recurring: perm[(t + n - 1) % n],
        dropped: perm[(t + 2 * n - 2) % n],
    }
}

/// Seeded topic permutation used by the generator.
pub fn topic_permutation(topics: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..topics).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, PERM_STREAM, 0)));
    perm
}

pub fn topic_label(topic: usize) -> String {
    format!("t{topic}")
}

/// Fraction of the query's distinct tokens present in the document.
pub fn token_overlap(query: &[String], doc: &[String]) -> f64 {
    let q: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    if q.is_empty() {
        return 0.0;
    }
    let d: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
    q.intersection(&d).count() as f64 / q.len() as f64
}

pub fn head_token(topic: usize, concept: usize) -> String {
    format!("t{topic}c{concept}")
}

pub fn related_token(topic: usize, concept: usize, j: usize) -> String {
    format!("t{topic}c{concept}r{j}")
}

pub fn generic_token(j: usize) -> String {
    format!("g{j}")
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

struct Query {
    tokens: Vec<String>,
    concepts: Vec<usize>,
    generic: Vec<usize>,
}

impl Gen<'_> {
    fn concepts(&mut self, count: usize, exclude: &BTreeSet<usize>) -> Vec<usize> {
        let pool: Vec<usize> = (0..self.cfg.concepts_per_topic).filter(|c| !exclude.contains(c)).collect();
        pool.choose_multiple(&mut self.rng, count.min(pool.len())).copied().collect()
    }

    fn generic(&mut self, count: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.rng, self.cfg.generic_vocab, count).into_vec()
    }

    fn mention(&self, topic: usize, concept: usize, verbatim: bool, out: &mut Vec<String>) {
        if verbatim {
            out.push(head_token(topic, concept));
        }
        out.extend((0..self.cfg.related_per_concept).map(|j| related_token(topic, concept, j)));
    }

    fn query(&mut self, topic: usize) -> Query {
        let concepts = self.concepts(self.cfg.query_concepts, &BTreeSet::new());
        let generic = self.generic(self.cfg.query_generic);
        let mut tokens: Vec<String> = concepts.iter().map(|&c| head_token(topic, c)).collect();
        tokens.extend(generic.iter().map(|&g| generic_token(g)));
        tokens.shuffle(&mut self.rng);
        Query {
            tokens,
            concepts,
            generic,
        }
    }

    fn relevant_doc(&mut self, topic: usize, q: &Query) -> Vec<String> {
        let distinct = q.concepts.len() + q.generic.len();
        let required = (self.cfg.min_overlap * distinct as f64 - 1e-9).ceil() as usize;
        let verbatim = required.min(q.concepts.len());
        let shared_generic = (required - verbatim).min(q.generic.len());
        let mut order = q.concepts.clone();
        order.shuffle(&mut self.rng);
        let mut tokens = Vec::new();
        for (rank, &c) in order.iter().enumerate() {
            self.mention(topic, c, rank < verbatim, &mut tokens);
        }
        let used: BTreeSet<usize> = q.concepts.iter().copied().collect();
        let fill = self.cfg.doc_concepts - q.concepts.len();
        for c in self.concepts(fill, &used) {
            self.mention(topic, c, true, &mut tokens);
        }
        let mut generic: BTreeSet<usize> = q.generic.iter().copied().take(shared_generic).collect();
        let target = self.cfg.doc_generic.max(shared_generic);
        for g in self.generic(self.cfg.generic_vocab) {
            if generic.len() >= target {
                break;
            }
            generic.insert(g);
        }
        tokens.extend(generic.into_iter().map(generic_token));
        tokens.shuffle(&mut self.rng);
        tokens
    }

    fn background_doc(&mut self, topic: usize) -> Vec<String> {
        let mut tokens: Vec<String> = Vec::new();
        for c in self.concepts(self.cfg.doc_concepts, &BTreeSet::new()) {
            self.mention(topic, c, true, &mut tokens);
        }
        tokens.extend(self.generic(self.cfg.doc_generic).into_iter().map(generic_token));
        tokens.shuffle(&mut self.rng);
        tokens
    }
}

fn item(id: String, kind: ItemKind, topic: usize, tokens: Vec<String>) -> TextItem {
    TextItem {
        id,
        kind,
        text: tokens.join(" "),
        tokens,
        topic: Some(topic_label(topic)),
    }
}

/// Generates `cfg.sessions` sessions. The output depends only on `cfg` and
/// `seed`.
pub fn generate_synthetic_stream(cfg: &SynthConfig, seed: u64) -> Result<Vec<SessionStream>> {
    cfg.validate()?;
    let perm = topic_permutation(cfg.topics, seed);
    (0..cfg.sessions)
        .map(|t| {
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SESSION_STREAM, t as u64));
            generate_session(&mut Gen { cfg, rng }, t, session_topics(&perm, t))
        })
        .collect()
}

fn generate_session(g: &mut Gen<'_>, t: usize, topics: SessionTopics) -> Result<SessionStream> {
    let cfg = g.cfg;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut qrels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let (mut nq, mut nd, mut eq, mut ed) = (0usize, 0usize, 0usize, 0usize);
    let mut train_docs = 0usize;

    for topic in [topics.recurring, topics.new] {
        for _ in 0..cfg.train_queries_per_topic {
            let q = g.query(topic);
            let qid = format!("s{t}q{nq}");
            nq += 1;
            for _ in 0..cfg.relevant_per_query {
                let did = format!("s{t}d{nd}");
                nd += 1;
                train.push(item(did.clone(), ItemKind::Document, topic, g.relevant_doc(topic, &q)));
                qrels.entry(qid.clone()).or_default().insert(did);
                train_docs += 1;
            }
            train.push(item(qid, ItemKind::Query, topic, q.tokens));
        }
    }

    for topic in [topics.dropped, topics.recurring, topics.new] {
        let in_train = topic != topics.dropped;
        for _ in 0..cfg.eval_queries_per_topic {
            let q = g.query(topic);
            let qid = format!("s{t}eq{eq}");
            eq += 1;
            for _ in 0..cfg.relevant_per_query {
                if in_train {
                    let did = format!("s{t}d{nd}");
                    nd += 1;
                    train.push(item(did.clone(), ItemKind::Document, topic, g.relevant_doc(topic, &q)));
                    qrels.entry(qid.clone()).or_default().insert(did);
                    train_docs += 1;
                }
                let did = format!("s{t}ed{ed}");
                ed += 1;
                eval.push(item(did.clone(), ItemKind::Document, topic, g.relevant_doc(topic, &q)));
                qrels.entry(qid.clone()).or_default().insert(did);
            }
            eval.push(item(qid, ItemKind::Query, topic, q.tokens));
        }
        for _ in 0..cfg.eval_background_per_topic {
            let did = format!("s{t}ed{ed}");
            ed += 1;
            eval.push(item(did, ItemKind::Document, topic, g.background_doc(topic)));
        }
    }

    let mut k = 0usize;
    while train_docs < cfg.docs_per_session {
        let topic = if k.is_multiple_of(2) { topics.recurring } else { topics.new };
        k += 1;
        let did = format!("s{t}d{nd}");
        nd += 1;
        train.push(item(did, ItemKind::Document, topic, g.background_doc(topic)));
        train_docs += 1;
    }

    train.shuffle(&mut g.rng);
    eval.shuffle(&mut g.rng);
    Ok(SessionStream {
        index: t,
        train,
        eval,
        qrels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_wraps() {
        let perm = vec![2, 0, 1];
        assert_eq!(
            session_topics(&perm, 0),
            SessionTopics {
                new: 2,
                recurring: 1,
                dropped: 0
            }
        );
        assert_eq!(session_topics(&perm, 4).new, 0);
    }

    #[test]
    fn rejects_overflowing_counts() {
        let cfg = SynthConfig {
            train_queries_per_topic: usize::MAX / 2,
            eval_queries_per_topic: usize::MAX / 2,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_small_shapes() {
        let cfg = SynthConfig {
            topics: 2,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic_stream(&cfg, 1).is_err());
        let cfg = SynthConfig {
            sessions: 1,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic_stream(&cfg, 1).is_err());
    }

    #[test]
    fn relevant_docs_overlap_enough() {
        let cfg = SynthConfig {
            sessions: 2,
            ..SynthConfig::default()
        };
        let stream = generate_synthetic_stream(&cfg, 3).unwrap();
        for s in &stream {
            let all: BTreeMap<&str, &TextItem> = s.train.iter().chain(&s.eval).map(|i| (i.id.as_str(), i)).collect();
            for (q, ds) in &s.qrels {
                for d in ds {
                    assert!(token_overlap(&all[q.as_str()].tokens, &all[d.as_str()].tokens) >= 0.6);
                }
            }
        }
    }
}
