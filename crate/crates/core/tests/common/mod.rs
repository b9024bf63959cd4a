//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numeric code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cream_core::matrix::Matrix;
use cream_core::simkernel::{EmbeddedItem, ItemKind};
use cream_core::trainer::{loss_gradient, EncoderAdapter, LossSimilarity, RawItem, TrainConfig, TrainingGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    unit(gaussian(rng, d))
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_unit(rng, d)).collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows, rows[0].len()).unwrap()
}

pub fn item(id: &str, kind: ItemKind, rows: &[Vec<f64>]) -> EmbeddedItem {
    let tokens = (0..rows.len()).map(|i| format!("w{i}")).collect();
    EmbeddedItem::new(id, kind, tokens, matrix(rows)).unwrap()
}

/// Raw item whose base rows are already unit length, so the identity adapter
/// embeds it to exactly these rows.
pub fn raw(id: &str, kind: ItemKind, rows: &[Vec<f64>]) -> RawItem {
    RawItem {
        id: id.into(),
        kind,
        tokens: (0..rows.len()).map(|i| format!("w{i}")).collect(),
        base: matrix(rows),
    }
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

pub fn dotv(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn brute_maxsim(q: &[Vec<f64>], d: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for qi in q {
        let mut best = f64::NEG_INFINITY;
        for dj in d {
            let s = dotv(qi, dj);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Okapi BM25 with the negative-idf floor, scored one document at a time.
pub fn bm25_reference(docs: &[Vec<String>], query: &[String], k1: f64, b: f64, eps: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for d in docs {
        let uniq: BTreeSet<&str> = d.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let raw_idf: BTreeMap<&str, f64> = df.iter().map(|(t, f)| (*t, ((n - f + 0.5) / (f + 0.5)).ln())).collect();
    let mean_idf = raw_idf.values().sum::<f64>() / raw_idf.len() as f64;
    let idf = |t: &str| match raw_idf.get(t) {
        None => 0.0,
        Some(v) if *v < 0.0 => eps * mean_idf,
        Some(v) => *v,
    };
    docs.iter()
        .map(|d| {
            let dl = d.len() as f64;
            query
                .iter()
                .map(|q| {
                    let f = d.iter().filter(|t| *t == q).count() as f64;
                    idf(q) * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl))
                })
                .sum()
        })
        .collect()
}

pub const GRAD_DIM: usize = 8;

fn encode_rows(w: &[f64], base: &Matrix) -> Vec<Vec<f64>> {
    let d = GRAD_DIM;
    base.iter_rows()
        .map(|b| unit((0..d).map(|i| (0..d).map(|j| w[i * d + j] * b[j]).sum()).collect()))
        .collect()
}

fn pooled(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; GRAD_DIM];
    for r in rows {
        for i in 0..GRAD_DIM {
            m[i] += r[i] / rows.len() as f64;
        }
    }
    unit(m)
}

/// Batch-mean softmax cross-entropy with the positive at index 0.
pub fn oracle_loss(w: &[f64], groups: &[(RawItem, Vec<RawItem>)], tau: f64, sim: LossSimilarity) -> f64 {
    let mut total = 0.0;
    for (q, docs) in groups {
        let qe = encode_rows(w, &q.base);
        let logits: Vec<f64> = docs
            .iter()
            .map(|d| {
                let de = encode_rows(w, &d.base);
                let s = match sim {
                    LossSimilarity::Cosine => dotv(&pooled(&qe), &pooled(&de)),
                    LossSimilarity::MaxSim => brute_maxsim(&qe, &de),
                };
                s / tau
            })
            .collect();
        let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        total += lse - logits[0];
    }
    total / groups.len() as f64
}

fn random_raw(rng: &mut ChaCha8Rng, id: String, kind: ItemKind) -> RawItem {
    let n = rng.random_range(1..=5);
    raw(&id, kind, &unit_rows(rng, n, GRAD_DIM))
}

/// Worst elementwise relative error between the analytic gradient and
/// central differences of [`oracle_loss`], plus the worst loss mismatch.
pub fn gradient_errors(sim: LossSimilarity, seed: u64, batches: usize) -> (f64, f64) {
    let d = GRAD_DIM;
    let mut rng = rng(seed);
    let cfg = TrainConfig {
        tau: 0.5,
        similarity: sim,
        ..TrainConfig::default()
    };
    let (mut worst_rel, mut worst_loss) = (0.0f64, 0.0f64);
    for _ in 0..batches {
        let mut w = vec![0.0; d * d];
        for (i, x) in w.iter_mut().enumerate() {
            *x = if i % (d + 1) == 0 { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4);
        }
        let groups: Vec<(RawItem, Vec<RawItem>)> = (0..rng.random_range(1..=4))
            .map(|g| {
                let q = random_raw(&mut rng, format!("q{g}"), ItemKind::Query);
                let docs = (0..rng.random_range(2..=5))
                    .map(|k| random_raw(&mut rng, format!("d{g}_{k}"), ItemKind::Document))
                    .collect();
                (q, docs)
            })
            .collect();
        let refs: Vec<Vec<&RawItem>> = groups.iter().map(|(_, ds)| ds.iter().collect()).collect();
        let tg: Vec<TrainingGroup<'_>> = groups
            .iter()
            .zip(&refs)
            .map(|((q, _), docs)| TrainingGroup { query: q, docs })
            .collect();
        let adapter = EncoderAdapter::with_weights(7, Matrix::from_vec(d, d, w.clone()).unwrap(), 0).unwrap();
        let (loss, grad) = loss_gradient(&tg, &adapter, &cfg).unwrap();
        worst_loss = worst_loss.max((loss - oracle_loss(&w, &groups, cfg.tau, sim)).abs());

        let h = 1e-5;
        for k in 0..d * d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (oracle_loss(&wp, &groups, cfg.tau, sim) - oracle_loss(&wm, &groups, cfg.tau, sim)) / (2.0 * h);
            let an = grad.as_slice()[k];
            worst_rel = worst_rel.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    (worst_rel, worst_loss)
}

/// Per-step check of a greedy coverage trace. Every pick after the first must
/// maximize the covered union, then minimize overlap, then take the smallest
/// query id among the candidates not yet picked.
pub fn greedy_trace_violation(coverage: &[(String, Vec<String>)], picked: &[usize]) -> Option<String> {
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut taken = vec![false; coverage.len()];
    for (step, &p) in picked.iter().enumerate() {
        if p >= coverage.len() || taken[p] {
            return Some(format!("step {step}: invalid or repeated pick {p}"));
        }
        if step > 0 {
            let mut best: Option<(usize, isize, &str, usize)> = None;
            for (i, (qid, cov)) in coverage.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let c: BTreeSet<&str> = cov.iter().map(String::as_str).collect();
                let union = covered.union(&c).count();
                let overlap = covered.intersection(&c).count() as isize;
                let key = (union, -overlap, qid.as_str(), i);
                let better = match &best {
                    None => true,
                    Some(b) => (key.0, key.1) > (b.0, b.1) || ((key.0, key.1) == (b.0, b.1) && key.2 < b.2),
                };
                if better {
                    best = Some(key);
                }
            }
            let expect = best.unwrap().3;
            if expect != p {
                return Some(format!("step {step}: picked {p}, oracle wants {expect}"));
            }
        }
        taken[p] = true;
        covered.extend(coverage[p].1.iter().map(String::as_str));
    }
    None
}

/// Positive and bottom-(k−1) negatives by sorting every score.
pub fn full_sort_selection(scored: &[(f64, String)], k: usize) -> (String, Vec<String>) {
    let mut desc = scored.to_vec();
    desc.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let pos = desc[0].1.clone();
    let mut asc: Vec<(f64, String)> = scored.iter().filter(|s| s.1 != pos).cloned().collect();
    asc.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    (pos, asc.into_iter().take(k - 1).map(|s| s.1).collect())
}
