//! Exact and cluster-pruned late-interaction retrieval.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::simkernel::{maxsim, EmbeddedItem};
use crate::softmem::SoftMemory;

/// A scored document.
#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

fn rank(mut hits: Vec<Hit>, top_k: usize) -> Vec<Hit> {
    hits.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.id.cmp(&b.id),
        o => o,
    });
    hits.truncate(top_k);
    hits
}

fn score_all(query: &EmbeddedItem, docs: &[&EmbeddedItem]) -> Result<Vec<Hit>> {
    docs.par_iter()
        .map(|d| {
            Ok(Hit {
                id: d.id.clone(),
                score: maxsim(query.emb(), d.emb())?,
            })
        })
        .collect()
}

/// Scores every document and returns the `top_k` best.
pub fn retrieve(query: &EmbeddedItem, corpus: &[&EmbeddedItem], top_k: usize) -> Result<Vec<Hit>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be positive"));
    }
    if corpus.is_empty() {
        return Err(Error::invalid("retrieval corpus is empty"));
    }
    Ok(rank(score_all(query, corpus)?, top_k))
}

/// Restricts scoring to documents of the `clusters` nearest memory clusters.
pub fn retrieve_pruned(query: &EmbeddedItem, mem: &SoftMemory, top_k: usize, clusters: usize) -> Result<Vec<Hit>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be positive"));
    }
    let nearest = mem.nearest_k(query, clusters.max(1))?;
    let docs: Vec<&EmbeddedItem> = nearest
        .iter()
        .filter_map(|(c, _)| mem.cluster(*c))
        .flat_map(|c| c.docs().map(|m| &m.item))
        .collect();
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    Ok(rank(score_all(query, &docs)?, top_k))
}

/// All documents held by the memory, in cluster then id order.
pub fn memory_documents(mem: &SoftMemory) -> Vec<&EmbeddedItem> {
    mem.clusters().flat_map(|c| c.docs().map(|m| &m.item)).collect()
}
