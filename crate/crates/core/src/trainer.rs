//! Trainable encoder and its contrastive objective.
//!
//! The encoder is a frozen token embedder (each token id hashed to a seeded
//! Gaussian unit vector) followed by a trainable `d × d` linear adapter `W`;
//! every output row is `normalize(W · base(token))`. Items keep their base
//! rows so the whole memory can be re-embedded after an update.
//!
//! The loss is softmax cross-entropy over `sim(q, d) / τ` with the positive
//! document as target. Gradients are derived by hand through the row
//! normalization, mean pooling and pooled normalization.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, normalize_in_place, Matrix};
use crate::simkernel::{pooled_embedding, EmbeddedItem, ItemKind};

/// Largest adapter dimension accepted when decoding a checkpoint.
pub const MAX_CHECKPOINT_DIM: usize = 4096;

/// An item before encoding: its tokens and the frozen base rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RawItem {
    pub id: String,
    pub kind: ItemKind,
    pub tokens: Vec<String>,
    pub base: Matrix,
}

/// Similarity used inside the contrastive loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSimilarity {
    /// Cosine of mean-pooled embeddings.
    #[default]
    Cosine,
    /// Token-level late interaction; gradient flows through the arg-max row
    /// (first index on ties).
    MaxSim,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub similarity: LossSimilarity,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            lr: 0.05,
            epochs: 1,
            batch: 16,
            similarity: LossSimilarity::Cosine,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be non-negative, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::invalid("epochs and batch must be positive"));
        }
        Ok(())
    }
}

/// A query with its candidate documents; `docs[0]` is the positive.
#[derive(Clone, Copy, Debug)]
pub struct TrainingGroup<'a> {
    pub query: &'a RawItem,
    pub docs: &'a [&'a RawItem],
}

/// How items are represented for clustering and retrieval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One row per token.
    #[default]
    Token,
    /// A single mean-pooled row per item.
    Pooled,
}

/// Maps raw items to their current embeddings.
pub trait Embed {
    fn embed(&self, raw: &RawItem) -> Result<EmbeddedItem>;
}

/// An adapter paired with the representation granularity.
#[derive(Clone, Copy, Debug)]
pub struct ItemEncoder<'a> {
    pub adapter: &'a EncoderAdapter,
    pub granularity: Granularity,
}

impl Embed for ItemEncoder<'_> {
    fn embed(&self, raw: &RawItem) -> Result<EmbeddedItem> {
        let item = self.adapter.encode(raw)?;
        match self.granularity {
            Granularity::Token => Ok(item),
            Granularity::Pooled => {
                let pooled = pooled_embedding(&item)?;
                let row = Matrix::from_vec(1, pooled.len(), pooled)?;
                EmbeddedItem::new(item.id, item.kind, item.tokens, row)
            }
        }
    }
}

impl Embed for EncoderAdapter {
    fn embed(&self, raw: &RawItem) -> Result<EmbeddedItem> {
        self.encode(raw)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderAdapter {
    base_seed: u64,
    w: Matrix,
    steps: u64,
}

impl EncoderAdapter {
    pub fn new(dim: usize, base_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("encoder dimension must be positive"));
        }
        Ok(Self {
            base_seed,
            w: Matrix::identity(dim),
            steps: 0,
        })
    }

    pub fn with_weights(base_seed: u64, w: Matrix, steps: u64) -> Result<Self> {
        if w.rows() != w.cols() || w.rows() == 0 {
            return Err(Error::invalid("adapter weights must be a nonempty square matrix"));
        }
        Ok(Self { base_seed, w, steps })
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    /// Frozen unit vector for a token: the token id is hashed, mixed with the
    /// base seed and used to draw a Gaussian direction.
    pub fn base_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(fnv1a(token.as_bytes()) ^ self.base_seed));
        let mut v = vec![0.0; self.dim()];
        loop {
            v.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            if normalize_in_place(&mut v) > 0.0 {
                return v;
            }
        }
    }

    /// Builds the raw item for `tokens`, truncated to `max_tokens`.
    pub fn raw_item(
        &self,
        id: impl Into<String>,
        kind: ItemKind,
        tokens: &[String],
        max_tokens: usize,
    ) -> Result<RawItem> {
        if tokens.is_empty() {
            return Err(Error::invalid("cannot encode an empty token list"));
        }
        let tokens: Vec<String> = tokens.iter().take(max_tokens).cloned().collect();
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.base_vector(t)).collect();
        Ok(RawItem {
            id: id.into(),
            kind,
            base: Matrix::from_rows(&rows, self.dim())?,
            tokens,
        })
    }

    /// `normalize(W · b)` for every base row.
    pub fn encode(&self, raw: &RawItem) -> Result<EmbeddedItem> {
        if raw.base.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: raw.base.cols(),
            });
        }
        let mut out = Matrix::zeros(0, self.dim());
        for b in raw.base.iter_rows() {
            let mut z = self.w.mul_vec(b);
            if normalize_in_place(&mut z) == 0.0 {
                return Err(Error::invalid(format!(
                    "adapter maps a token of {} to the zero vector",
                    raw.id
                )));
            }
            out.push_row(&z)?;
        }
        EmbeddedItem::new(raw.id.clone(), raw.kind, raw.tokens.clone(), out)
    }

    /// Convenience: hash, truncate and encode in one step.
    pub fn encode_tokens(
        &self,
        id: impl Into<String>,
        kind: ItemKind,
        tokens: &[String],
        max_tokens: usize,
    ) -> Result<EmbeddedItem> {
        self.encode(&self.raw_item(id, kind, tokens, max_tokens)?)
    }

    /// Writes a JSON header line followed by `W` as little-endian f32,
    /// row-major.
    pub fn write_checkpoint(&self, mut out: impl Write) -> Result<()> {
        let header = CheckpointHeader {
            d: self.dim(),
            base_seed: self.base_seed,
            steps: self.steps,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for &v in self.w.as_slice() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(bytes: &[u8]) -> Result<Self> {
        const FMT: &str = "adapter checkpoint";
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(FMT, "missing header line"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::format(FMT, format!("bad header: {e}")))?;
        if header.d == 0 || header.d > MAX_CHECKPOINT_DIM {
            return Err(Error::format(FMT, format!("unsupported dimension {}", header.d)));
        }
        let body = &bytes[nl + 1..];
        let expected = header.d * header.d * 4;
        if body.len() != expected {
            return Err(Error::format(
                FMT,
                format!("weight block has {} bytes, expected {expected}", body.len()),
            ));
        }
        let data: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(FMT, "non-finite weight"));
        }
        Self::with_weights(header.base_seed, Matrix::from_vec(header.d, header.d, data)?, header.steps)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    d: usize,
    base_seed: u64,
    steps: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Forward pass of one item through the adapter.
struct Forward<'a> {
    base: &'a Matrix,
    /// Pre-normalization norms `|W b_i|`.
    norms: Vec<f64>,
    /// Unit rows `e_i`.
    rows: Matrix,
    /// Mean of `rows` and its norm; filled for cosine similarity only.
    pooled: Option<(Vec<f64>, f64)>,
}

impl<'a> Forward<'a> {
    fn run(w: &Matrix, raw: &'a RawItem, pool: bool) -> Option<Self> {
        if raw.base.rows() == 0 || raw.base.cols() != w.cols() {
            return None;
        }
        let mut rows = Matrix::zeros(0, w.rows());
        let mut norms = Vec::with_capacity(raw.base.rows());
        for b in raw.base.iter_rows() {
            let mut z = w.mul_vec(b);
            let n = normalize_in_place(&mut z);
            if n == 0.0 {
                return None;
            }
            norms.push(n);
            rows.push_row(&z).ok()?;
        }
        let pooled = if pool {
            let mut m = vec![0.0; rows.cols()];
            for r in rows.iter_rows() {
                m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
            }
            let n = rows.rows() as f64;
            m.iter_mut().for_each(|v| *v /= n);
            let mnorm = normalize_in_place(&mut m);
            if mnorm <= 1e-12 {
                return None;
            }
            Some((m, mnorm))
        } else {
            None
        };
        Some(Self {
            base: &raw.base,
            norms,
            rows,
            pooled,
        })
    }

    fn pooled(&self) -> &[f64] {
        &self.pooled.as_ref().expect("cosine forward pass").0
    }

    /// Maxsim against `other` with the selected row of `other` per own row.
    fn maxsim_argmax(&self, other: &Forward<'_>) -> (f64, Vec<usize>) {
        let mut total = 0.0;
        let mut arg = Vec::with_capacity(self.rows.rows());
        for q in self.rows.iter_rows() {
            let (mut best, mut best_j) = (f64::NEG_INFINITY, 0);
            for (j, x) in other.rows.iter_rows().enumerate() {
                let s = dot(q, x);
                if s > best {
                    best = s;
                    best_j = j;
                }
            }
            total += best;
            arg.push(best_j);
        }
        (total, arg)
    }

    /// Converts `dL/dp` (pooled) into per-row `dL/de_i`.
    fn pooled_to_row_grads(&self, g_pooled: &[f64]) -> Matrix {
        let (p, mnorm) = self.pooled.as_ref().expect("cosine forward pass");
        let pg = dot(p, g_pooled);
        let n = self.rows.rows() as f64;
        let g_row: Vec<f64> = g_pooled
            .iter()
            .zip(p)
            .map(|(g, pv)| (g - pv * pg) / mnorm / n)
            .collect();
        let mut out = Matrix::zeros(self.rows.rows(), self.rows.cols());
        for i in 0..out.rows() {
            out.row_mut(i).copy_from_slice(&g_row);
        }
        out
    }

    /// Accumulates `dL/dW` given `dL/de_i` for each row.
    fn backprop_into(&self, row_grads: &Matrix, grad_w: &mut Matrix, scale: f64) {
        for i in 0..self.rows.rows() {
            let e = self.rows.row(i);
            let ge = row_grads.row(i);
            let eg = dot(e, ge);
            let b = self.base.row(i);
            let inv = scale / self.norms[i];
            for r in 0..grad_w.rows() {
                let gz = (ge[r] - e[r] * eg) * inv;
                if gz == 0.0 {
                    continue;
                }
                let row = grad_w.row_mut(r);
                for (c, bv) in row.iter_mut().zip(b) {
                    *c += gz * bv;
                }
            }
        }
    }
}

/// Softmax of `logits`, computed with the max subtracted.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy with target index 0.
pub fn cross_entropy_first(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[0]
}

struct GroupPass<'a> {
    query: Forward<'a>,
    docs: Vec<Forward<'a>>,
    sims: Vec<f64>,
    argmax: Vec<Vec<usize>>,
}

fn forward_group<'a>(
    w: &Matrix,
    group: &TrainingGroup<'a>,
    cfg: &TrainConfig,
) -> Option<GroupPass<'a>> {
    let pool = cfg.similarity == LossSimilarity::Cosine;
    let query = Forward::run(w, group.query, pool)?;
    let docs: Vec<Forward<'a>> = group
        .docs
        .iter()
        .map(|d| Forward::run(w, d, pool))
        .collect::<Option<_>>()?;
    let (sims, argmax) = match cfg.similarity {
        LossSimilarity::Cosine => (
            docs.iter().map(|d| dot(query.pooled(), d.pooled())).collect(),
            Vec::new(),
        ),
        LossSimilarity::MaxSim => docs.iter().map(|d| query.maxsim_argmax(d)).unzip(),
    };
    Some(GroupPass {
        query,
        docs,
        sims,
        argmax,
    })
}

/// Loss of a single group under the current adapter.
pub fn contrastive_loss(
    group: &TrainingGroup<'_>,
    adapter: &EncoderAdapter,
    cfg: &TrainConfig,
) -> Result<f64> {
    if cfg.tau.is_nan() || cfg.tau <= 0.0 {
        return Err(Error::invalid(format!("tau must be positive, got {}", cfg.tau)));
    }
    if group.docs.is_empty() {
        return Err(Error::invalid("training group has no documents"));
    }
    let pass = forward_group(&adapter.w, group, cfg).ok_or(Error::DegeneratePooling)?;
    let logits: Vec<f64> = pass.sims.iter().map(|s| s / cfg.tau).collect();
    Ok(cross_entropy_first(&logits))
}

/// Loss and `dL/dW` of one group; `None` when the group is degenerate.
fn group_gradient(
    w: &Matrix,
    group: &TrainingGroup<'_>,
    cfg: &TrainConfig,
) -> Option<(f64, Matrix)> {
    let pass = forward_group(w, group, cfg)?;
    let logits: Vec<f64> = pass.sims.iter().map(|s| s / cfg.tau).collect();
    let loss = cross_entropy_first(&logits);
    let probs = softmax(&logits);
    // dL/ds_j = (a_j − 1[j = 0]) / τ
    let coef: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(j, a)| (a - if j == 0 { 1.0 } else { 0.0 }) / cfg.tau)
        .collect();

    let d = w.rows();
    let mut grad = Matrix::zeros(d, w.cols());
    match cfg.similarity {
        LossSimilarity::Cosine => {
            let mut gq = vec![0.0; d];
            for (c, doc) in coef.iter().zip(&pass.docs) {
                gq.iter_mut().zip(doc.pooled()).for_each(|(g, p)| *g += c * p);
                let gd: Vec<f64> = pass.query.pooled().iter().map(|p| c * p).collect();
                doc.backprop_into(&doc.pooled_to_row_grads(&gd), &mut grad, 1.0);
            }
            let q = &pass.query;
            q.backprop_into(&q.pooled_to_row_grads(&gq), &mut grad, 1.0);
        }
        LossSimilarity::MaxSim => {
            let q = &pass.query;
            let mut gq = Matrix::zeros(q.rows.rows(), d);
            for ((c, doc), arg) in coef.iter().zip(&pass.docs).zip(&pass.argmax) {
                let mut gd = Matrix::zeros(doc.rows.rows(), d);
                for (i, &j) in arg.iter().enumerate() {
                    let qi = q.rows.row(i);
                    let dj = doc.rows.row(j);
                    gq.row_mut(i).iter_mut().zip(dj).for_each(|(g, v)| *g += c * v);
                    gd.row_mut(j).iter_mut().zip(qi).for_each(|(g, v)| *g += c * v);
                }
                doc.backprop_into(&gd, &mut grad, 1.0);
            }
            q.backprop_into(&gq, &mut grad, 1.0);
        }
    }
    Some((loss, grad))
}

/// Batch-mean loss and analytic gradient with respect to `W`.
///
/// Degenerate groups (zero pooled vector, zero-mapped token) are skipped
/// with a warning and excluded from the mean. Returns `(0, 0)` when every
/// group is skipped.
pub fn loss_gradient(
    groups: &[TrainingGroup<'_>],
    adapter: &EncoderAdapter,
    cfg: &TrainConfig,
) -> Result<(f64, Matrix)> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let per_group: Vec<Option<(f64, Matrix)>> = groups
        .par_iter()
        .map(|g| group_gradient(&adapter.w, g, cfg))
        .collect();
    let d = adapter.dim();
    let mut grad = Matrix::zeros(d, d);
    let mut loss = 0.0;
    let mut used = 0usize;
    // Fixed-order reduction keeps results bitwise reproducible.
    for (g, r) in groups.iter().zip(per_group) {
        match r {
            Some((l, gw)) => {
                loss += l;
                grad.axpy(1.0, &gw);
                used += 1;
            }
            None => log::warn!("skipping degenerate training group for query {}", g.query.id),
        }
    }
    if used > 0 {
        loss /= used as f64;
        grad.scale(1.0 / used as f64);
    }
    Ok((loss, grad))
}

/// Summary of one call to [`update_encoder`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: u64,
    /// Mean batch loss over all steps, measured before each step.
    pub mean_loss: f64,
}

/// Plain mini-batch gradient descent over `groups` for `cfg.epochs` passes.
pub fn update_encoder(
    groups: &[TrainingGroup<'_>],
    adapter: &EncoderAdapter,
    cfg: &TrainConfig,
) -> Result<(EncoderAdapter, TrainStats)> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let mut next = adapter.clone();
    let mut stats = TrainStats::default();
    let mut loss_sum = 0.0;
    for _ in 0..cfg.epochs {
        for batch in groups.chunks(cfg.batch) {
            let (loss, grad) = loss_gradient(batch, &next, cfg)?;
            if !loss.is_finite() || grad.as_slice().iter().any(|g| !g.is_finite()) {
                log::error!(
                    "non-finite loss {loss} at step {} (batch of {}, grad norm {})",
                    next.steps,
                    batch.len(),
                    grad.norm()
                );
                return Err(Error::NonFiniteLoss {
                    step: next.steps,
                    loss,
                });
            }
            next.w.axpy(-cfg.lr, &grad);
            next.steps += 1;
            stats.steps += 1;
            loss_sum += loss;
        }
    }
    stats.mean_loss = loss_sum / stats.steps as f64;
    Ok((next, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn identity_adapter_returns_base_rows() {
        let enc = EncoderAdapter::new(8, 42).unwrap();
        let raw = enc.raw_item("a", ItemKind::Query, &toks(&["x", "y"]), 128).unwrap();
        let e = enc.encode(&raw).unwrap();
        for (a, b) in e.emb().iter_rows().zip(raw.base.iter_rows()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn repeated_token_gives_identical_rows() {
        let enc = EncoderAdapter::new(8, 1).unwrap();
        let e = enc.encode_tokens("a", ItemKind::Query, &toks(&["x", "x"]), 128).unwrap();
        assert_eq!(e.emb().row(0), e.emb().row(1));
    }

    #[test]
    fn positive_scaling_of_w_is_absorbed() {
        let enc = EncoderAdapter::new(8, 1).unwrap();
        let mut scaled = enc.clone();
        scaled.weights_mut().scale(2.0);
        let t = toks(&["alpha", "beta", "gamma"]);
        let a = enc.encode_tokens("a", ItemKind::Query, &t, 128).unwrap();
        let b = scaled.encode_tokens("a", ItemKind::Query, &t, 128).unwrap();
        for (x, y) in a.emb().as_slice().iter().zip(b.emb().as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_tokens_rejected_and_truncation_applies() {
        let enc = EncoderAdapter::new(4, 1).unwrap();
        assert!(enc.raw_item("a", ItemKind::Query, &[], 128).is_err());
        let raw = enc
            .raw_item("a", ItemKind::Query, &toks(&["a", "b", "c"]), 2)
            .unwrap();
        assert_eq!(raw.base.rows(), 2);
    }

    #[test]
    fn uniform_similarities_give_log_group_size() {
        let logits = [0.3, 0.3, 0.3];
        assert!((cross_entropy_first(&logits) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sharp_positive_example() {
        let tau = 0.2;
        let logits = [0.9 / tau, 0.1 / tau, 0.1 / tau];
        let expected = (1.0 + 2.0 * (-4f64).exp()).ln();
        assert!((cross_entropy_first(&logits) - expected).abs() < 1e-12);
        assert!((expected - 0.035_98).abs() < 1e-5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -3.0, 200.0, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut enc = EncoderAdapter::new(3, 9).unwrap();
        enc.weights_mut().set(0, 1, 0.25);
        let mut buf = Vec::new();
        enc.write_checkpoint(&mut buf).unwrap();
        let back = EncoderAdapter::read_checkpoint(&buf).unwrap();
        assert_eq!(back, enc);
        assert!(EncoderAdapter::read_checkpoint(&buf[..buf.len() - 1]).is_err());
        assert!(EncoderAdapter::read_checkpoint(b"{}").is_err());
    }

    #[test]
    fn invalid_tau_rejected() {
        let enc = EncoderAdapter::new(4, 1).unwrap();
        let q = enc.raw_item("q", ItemKind::Query, &toks(&["a"]), 8).unwrap();
        let d = enc.raw_item("d", ItemKind::Document, &toks(&["a"]), 8).unwrap();
        let docs = [&d];
        let g = TrainingGroup { query: &q, docs: &docs };
        let cfg = TrainConfig {
            tau: 0.0,
            ..TrainConfig::default()
        };
        assert!(contrastive_loss(&g, &enc, &cfg).is_err());
    }
}
