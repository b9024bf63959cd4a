//! Okapi BM25 over an in-memory inverted index.
//!
//! Matches the common `BM25Okapi` formulation: `idf = ln((N − n + 0.5) /
//! (n + 0.5))`, with negative idf values replaced by `ε · mean(idf)`.

use std::cmp::Ordering;
use std::collections::HashMap;

pub const K1: f64 = 1.5;
pub const B: f64 = 0.75;
pub const EPSILON: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct Bm25Index {
    ids: Vec<String>,
    doc_len: Vec<f64>,
    avgdl: f64,
    idf: HashMap<String, f64>,
    postings: HashMap<String, Vec<(usize, f64)>>,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[(S, Vec<String>)]) -> Self {
        Self::with_params(docs, K1, B, EPSILON)
    }

    pub fn with_params<S: AsRef<str>>(docs: &[(S, Vec<String>)], k1: f64, b: f64, epsilon: f64) -> Self {
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, (_, toks)) in docs.iter().enumerate() {
            doc_len.push(toks.len() as f64);
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in toks {
                *tf.entry(t.as_str()).or_default() += 1.0;
            }
            for (t, f) in tf {
                postings.entry(t.to_string()).or_default().push((i, f));
            }
        }
        for p in postings.values_mut() {
            p.sort_by_key(|e| e.0);
        }
        let n = docs.len() as f64;
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<f64>() / n
        };

        let mut idf: HashMap<String, f64> = postings
            .iter()
            .map(|(t, p)| {
                let df = p.len() as f64;
                (t.clone(), (n - df + 0.5).ln() - (df + 0.5).ln())
            })
            .collect();
        if !idf.is_empty() {
            // Sum in term order so the floor does not depend on hash order.
            let mut terms: Vec<&String> = idf.keys().collect();
            terms.sort();
            let mean = terms.iter().map(|t| idf[*t]).sum::<f64>() / idf.len() as f64;
            let floor = epsilon * mean;
            for v in idf.values_mut() {
                if *v < 0.0 {
                    *v = floor;
                }
            }
        }
        Self {
            ids: docs.iter().map(|(id, _)| id.as_ref().to_string()).collect(),
            doc_len,
            avgdl,
            idf,
            postings,
            k1,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(0.0)
    }

    /// Score of every document, in insertion order. Repeated query terms
    /// count once per occurrence.
    pub fn scores(&self, query: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.ids.len()];
        for q in query {
            let (Some(idf), Some(post)) = (self.idf.get(q), self.postings.get(q)) else {
                continue;
            };
            for &(i, tf) in post {
                let norm = 1.0 - self.b + self.b * self.doc_len[i] / self.avgdl;
                out[i] += idf * (tf * (self.k1 + 1.0)) / (tf + self.k1 * norm);
            }
        }
        out
    }

    /// Ids of the `n` highest-scoring documents; ties by ascending id.
    pub fn top_n(&self, query: &[String], n: usize) -> Vec<String> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
            Ordering::Equal => self.ids[a].cmp(&self.ids[b]),
            o => o,
        });
        order.into_iter().take(n).map(|i| self.ids[i].clone()).collect()
    }
}

/// Top `n` documents per query by BM25.
pub fn bm25_prefilter<S: AsRef<str>>(query: &[String], documents: &[(S, Vec<String>)], n: usize) -> Vec<String> {
    if documents.is_empty() || n == 0 {
        return Vec::new();
    }
    Bm25Index::new(documents).top_n(query, n)
}
