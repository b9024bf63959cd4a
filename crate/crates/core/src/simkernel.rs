//! Token-level similarity kernels.
//!
//! Every item is a stack of unit-norm token embeddings, so a dot product is
//! a cosine similarity. Late-interaction scoring sums, over query tokens, the
//! best match among the target's rows:
//!
//! ```text
//! maxsim(Q, X) = Σᵢ maxⱼ Qᵢ · Xⱼ
//! ```
//!
//! Contributions are kept signed. `maxsim` is not symmetric: the first
//! argument selects.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, normalize_in_place, Matrix};

/// Tolerance on row norms of an [`EmbeddedItem`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Default maximum token length of the encoder.
pub const DEFAULT_MAX_TOKENS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Query,
    Document,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemKind::Query => f.write_str("query"),
            ItemKind::Document => f.write_str("document"),
        }
    }
}

/// A query or document after encoding: one unit-norm row per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedItem {
    pub id: String,
    pub kind: ItemKind,
    pub tokens: Vec<String>,
    emb: Matrix,
}

impl EmbeddedItem {
    pub fn new(
        id: impl Into<String>,
        kind: ItemKind,
        tokens: Vec<String>,
        emb: Matrix,
    ) -> Result<Self> {
        if emb.rows() == 0 {
            return Err(Error::invalid("embedded item needs at least one row"));
        }
        if emb.cols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for (i, row) in emb.iter_rows().enumerate() {
            let n = dot(row, row).sqrt();
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(format!(
                    "row {i} of item embedding has norm {n}, expected 1"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            kind,
            tokens,
            emb,
        })
    }

    /// Normalizes every row before construction. Zero rows are rejected.
    pub fn from_raw_rows(
        id: impl Into<String>,
        kind: ItemKind,
        tokens: Vec<String>,
        mut emb: Matrix,
    ) -> Result<Self> {
        for i in 0..emb.rows() {
            if normalize_in_place(emb.row_mut(i)) == 0.0 {
                return Err(Error::invalid(format!("row {i} has zero norm")));
            }
        }
        Self::new(id, kind, tokens, emb)
    }

    #[inline]
    pub fn emb(&self) -> &Matrix {
        &self.emb
    }

    #[inline]
    pub fn token_count(&self) -> usize {
        self.emb.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.emb.cols()
    }

    pub fn check(&self, cfg: &SimilarityConfig) -> Result<()> {
        if self.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                actual: self.dim(),
            });
        }
        if self.token_count() > cfg.max_tokens {
            return Err(Error::invalid(format!(
                "item {} has {} token rows, more than the maximum {}",
                self.id,
                self.token_count(),
                cfg.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// Maximum token length `L`; also the offset of [`sim_dist`].
    pub max_tokens: usize,
    pub dim: usize,
}

impl SimilarityConfig {
    pub fn new(max_tokens: usize, dim: usize) -> Result<Self> {
        if max_tokens == 0 || dim == 0 {
            return Err(Error::invalid("max_tokens and dim must be positive"));
        }
        Ok(Self { max_tokens, dim })
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            dim: 64,
        }
    }
}

/// Late-interaction score of `query` against the rows of `target`.
pub fn maxsim(query: &Matrix, target: &Matrix) -> Result<f64> {
    if query.cols() != target.cols() {
        return Err(Error::DimensionMismatch {
            expected: query.cols(),
            actual: target.cols(),
        });
    }
    if target.rows() == 0 {
        return Err(Error::invalid("maxsim target has no rows"));
    }
    Ok(maxsim_unchecked(query, target))
}

#[inline]
pub(crate) fn maxsim_unchecked(query: &Matrix, target: &Matrix) -> f64 {
    query
        .iter_rows()
        .map(|q| {
            target
                .iter_rows()
                .map(|x| dot(q, x))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// `L − maxsim(x, prototype)`. `prototype` is the normalized view: only the
/// nonzero bucket rows, each with unit norm.
pub fn sim_dist(x: &EmbeddedItem, prototype: &Matrix, cfg: &SimilarityConfig) -> Result<f64> {
    if prototype.rows() == 0 {
        return Err(Error::EmptyPrototype);
    }
    Ok(cfg.max_tokens as f64 - maxsim(x.emb(), prototype)?)
}

/// Mean of the token rows rescaled to unit norm.
pub fn pooled_embedding(x: &EmbeddedItem) -> Result<Vec<f64>> {
    pool_rows(x.emb())
}

pub(crate) fn pool_rows(m: &Matrix) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (a, b) in mean.iter_mut().zip(row) {
            *a += b;
        }
    }
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    // Opposite rows cancel to rounding noise rather than exact zero.
    if normalize_in_place(&mut mean) <= 1e-12 {
        return Err(Error::DegeneratePooling);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(rows: &[&[f64]]) -> EmbeddedItem {
        let m = Matrix::from_rows(rows, rows[0].len()).unwrap();
        let toks = (0..rows.len()).map(|i| format!("t{i}")).collect();
        EmbeddedItem::from_raw_rows("x", ItemKind::Query, toks, m).unwrap()
    }

    #[test]
    fn identical_single_token_scores_one() {
        let q = item(&[&[0.6, 0.8]]);
        assert!((maxsim(q.emb(), q.emb()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_token_example() {
        let q = item(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let x = item(&[&[0.6, 0.8], &[1.0, 0.0]]);
        assert!((maxsim(q.emb(), x.emb()).unwrap() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let q = item(&[&[1.0, 0.0]]);
        let x = item(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            maxsim(q.emb(), x.emb()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sim_dist_offsets_by_max_tokens() {
        let cfg = SimilarityConfig::new(128, 2).unwrap();
        let q = item(&[&[1.0, 0.0]]);
        let p = Matrix::from_rows(&[[1.0, 0.0]], 2).unwrap();
        assert_eq!(sim_dist(&q, &p, &cfg).unwrap(), 127.0);

        let rows: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let a = i as f64 * 0.3;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let nine = item(&refs);
        let dist = sim_dist(&nine, nine.emb(), &cfg).unwrap();
        assert!((dist - 119.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prototype_is_an_error() {
        let cfg = SimilarityConfig::new(128, 2).unwrap();
        let q = item(&[&[1.0, 0.0]]);
        assert!(matches!(
            sim_dist(&q, &Matrix::zeros(0, 2), &cfg),
            Err(Error::EmptyPrototype)
        ));
    }

    #[test]
    fn pooling_single_token_is_identity() {
        let q = item(&[&[0.6, 0.8]]);
        let p = pooled_embedding(&q).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pooling_opposite_tokens_is_degenerate() {
        let q = item(&[&[0.6, 0.8], &[-0.6, -0.8]]);
        assert!(matches!(pooled_embedding(&q), Err(Error::DegeneratePooling)));
    }

    #[test]
    fn rejects_non_unit_rows() {
        let m = Matrix::from_rows(&[[2.0, 0.0]], 2).unwrap();
        assert!(EmbeddedItem::new("a", ItemKind::Document, vec!["a".into()], m).is_err());
    }
}
