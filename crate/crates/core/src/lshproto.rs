//! Random-projection LSH prototypes.
//!
//! A cluster prototype hashes every member token into one of `2^h` buckets by
//! the sign pattern of its projections onto `h` random hyperplanes. Buckets
//! store raw sums and counts so members can be removed again; readers see the
//! normalized view, one unit row per nonempty bucket.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, normalize_in_place, Matrix};
use crate::simkernel::{maxsim, EmbeddedItem, SimilarityConfig};

pub const MAX_BITS: u32 = 30;
pub const DEFAULT_BITS: u32 = 12;

/// Rows whose norm falls below this are treated as empty in the normalized view.
const ZERO_ROW_EPS: f64 = 1e-12;

/// Shared family of hashing hyperplanes. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct LshFamily {
    bits: u32,
    dim: usize,
    seed: u64,
    hyperplanes: Matrix,
}

impl LshFamily {
    /// Draws `bits` Gaussian hyperplanes of dimension `dim` from `seed`.
    /// `bits == 0` yields a single bucket, i.e. a plain centroid.
    pub fn new(bits: u32, dim: usize, seed: u64) -> Result<Self> {
        if bits > MAX_BITS {
            return Err(Error::invalid(format!(
                "LSH bit count {bits} exceeds the maximum {MAX_BITS}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("LSH dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hyperplanes = Matrix::zeros(bits as usize, dim);
        for i in 0..bits as usize {
            let row = hyperplanes.row_mut(i);
            loop {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                if normalize_in_place(row) > 0.0 {
                    break;
                }
            }
        }
        Ok(Self {
            bits,
            dim,
            seed,
            hyperplanes,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bucket_count(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn hyperplanes(&self) -> &Matrix {
        &self.hyperplanes
    }

    /// Bit `i` of the key is set when `v` lies on the non-negative side of
    /// hyperplane `i`.
    pub fn bucket_of(&self, v: &[f64]) -> Result<u32> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(self.key(v))
    }

    #[inline]
    fn key(&self, v: &[f64]) -> u32 {
        self.hyperplanes
            .iter_rows()
            .enumerate()
            .fold(0u32, |key, (i, plane)| {
                if dot(plane, v) >= 0.0 {
                    key | (1 << i)
                } else {
                    key
                }
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Bucket {
    sum: Vec<f64>,
    count: u64,
}

/// Fixed-size token prototype of a cluster.
///
/// Only nonempty buckets are materialized; [`ClusterPrototype::to_dense`]
/// expands to the full `H × d` layout.
#[derive(Debug, Default)]
pub struct ClusterPrototype {
    dim: usize,
    buckets: BTreeMap<u32, Bucket>,
    view: OnceLock<Matrix>,
}

impl Clone for ClusterPrototype {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            buckets: self.buckets.clone(),
            view: self.view.clone(),
        }
    }
}

impl PartialEq for ClusterPrototype {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.buckets == other.buckets
    }
}

impl ClusterPrototype {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            buckets: BTreeMap::new(),
            view: OnceLock::new(),
        }
    }

    pub fn from_items<'a>(
        items: impl IntoIterator<Item = &'a EmbeddedItem>,
        fam: &LshFamily,
    ) -> Result<Self> {
        let mut p = Self::empty(fam.dim());
        for x in items {
            p.add(x, fam)?;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Number of nonempty buckets.
    pub fn occupied(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_count_of(&self, bucket: u32) -> u64 {
        self.buckets.get(&bucket).map_or(0, |b| b.count)
    }

    pub fn bucket_sum(&self, bucket: u32) -> Option<&[f64]> {
        self.buckets.get(&bucket).map(|b| b.sum.as_slice())
    }

    fn check_dim(&self, x: &EmbeddedItem, fam: &LshFamily) -> Result<()> {
        for d in [x.dim(), fam.dim()] {
            if d != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: d,
                });
            }
        }
        Ok(())
    }

    /// Accumulates every token row of `x` into its bucket.
    pub fn add(&mut self, x: &EmbeddedItem, fam: &LshFamily) -> Result<()> {
        self.check_dim(x, fam)?;
        for row in x.emb().iter_rows() {
            let b = self.buckets.entry(fam.key(row)).or_insert_with(|| Bucket {
                sum: vec![0.0; row.len()],
                count: 0,
            });
            for (s, v) in b.sum.iter_mut().zip(row) {
                *s += v;
            }
            b.count += 1;
        }
        self.view = OnceLock::new();
        Ok(())
    }

    /// Subtracts the token rows of `x`. Fails without modifying the
    /// prototype if any bucket would go negative.
    pub fn remove(&mut self, x: &EmbeddedItem, fam: &LshFamily) -> Result<()> {
        self.check_dim(x, fam)?;
        let keys: Vec<u32> = x.emb().iter_rows().map(|r| fam.key(r)).collect();
        let mut need: BTreeMap<u32, u64> = BTreeMap::new();
        for &k in &keys {
            *need.entry(k).or_default() += 1;
        }
        for (&k, &n) in &need {
            if self.bucket_count_of(k) < n {
                return Err(Error::NotInPrototype { bucket: k });
            }
        }
        for (row, k) in x.emb().iter_rows().zip(keys) {
            let b = self.buckets.get_mut(&k).expect("checked above");
            b.count -= 1;
            if b.count == 0 {
                self.buckets.remove(&k);
            } else {
                for (s, v) in b.sum.iter_mut().zip(row) {
                    *s -= v;
                }
            }
        }
        self.view = OnceLock::new();
        Ok(())
    }

    /// Unit-normalized nonempty bucket rows in ascending bucket order.
    pub fn normalized(&self) -> &Matrix {
        self.view.get_or_init(|| {
            let mut m = Matrix::zeros(0, self.dim);
            let mut row = vec![0.0; self.dim];
            for b in self.buckets.values() {
                row.copy_from_slice(&b.sum);
                if normalize_in_place(&mut row) > ZERO_ROW_EPS {
                    m.push_row(&row).expect("row has prototype dimension");
                }
            }
            m
        })
    }

    /// Distance `L − maxsim(x, p)` against the normalized view.
    pub fn sim_dist(&self, x: &EmbeddedItem, cfg: &SimilarityConfig) -> Result<f64> {
        let view = self.normalized();
        if view.rows() == 0 {
            return Err(Error::EmptyPrototype);
        }
        Ok(cfg.max_tokens as f64 - maxsim(x.emb(), view)?)
    }

    /// Full `H × d` sums and `H` counts.
    pub fn to_dense(&self, fam: &LshFamily) -> (Matrix, Vec<u32>) {
        let h = fam.bucket_count() as usize;
        let mut sums = Matrix::zeros(h, self.dim);
        let mut counts = vec![0u32; h];
        for (&k, b) in &self.buckets {
            sums.row_mut(k as usize).copy_from_slice(&b.sum);
            counts[k as usize] = u32::try_from(b.count).unwrap_or(u32::MAX);
        }
        (sums, counts)
    }

    /// Inverse of [`ClusterPrototype::to_dense`].
    pub fn from_dense(sums: &Matrix, counts: &[u32]) -> Result<Self> {
        if sums.rows() != counts.len() {
            return Err(Error::invalid("prototype sums and counts disagree on H"));
        }
        let mut buckets = BTreeMap::new();
        for (k, &c) in counts.iter().enumerate() {
            let row = sums.row(k);
            if c == 0 {
                if row.iter().any(|&v| v != 0.0) {
                    return Err(Error::invalid(format!(
                        "bucket {k} has zero count but a nonzero sum"
                    )));
                }
                continue;
            }
            buckets.insert(
                k as u32,
                Bucket {
                    sum: row.to_vec(),
                    count: c as u64,
                },
            );
        }
        Ok(Self {
            dim: sums.cols(),
            buckets,
            view: OnceLock::new(),
        })
    }
}

/// Bit count sufficient to hash `tokens` embeddings at distortion `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitSizeReport {
    pub tokens: u64,
    pub epsilon: f64,
    pub bits: u32,
    pub buckets: u64,
}

fn check_epsilon(epsilon: f64, allow_upper: bool) -> Result<()> {
    let upper_ok = if allow_upper {
        epsilon <= 1.0 / 3.0
    } else {
        epsilon < 1.0 / 3.0
    };
    if epsilon.is_finite() && epsilon > 0.0 && upper_ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon {epsilon} outside the feasible range (0, 1/3)"
        )))
    }
}

/// `⌈log₂(8·ln M / ε²)⌉` from the Johnson–Lindenstrauss bound.
pub fn sufficient_bits(tokens: u64, epsilon: f64) -> Result<BitSizeReport> {
    if tokens < 2 {
        return Err(Error::invalid("token count must be at least 2"));
    }
    check_epsilon(epsilon, false)?;
    let raw = (8.0 * (tokens as f64).ln() / (epsilon * epsilon)).log2().ceil();
    let bits = raw.max(0.0) as u32;
    if bits > 63 {
        return Err(Error::invalid(format!("{bits} bits cannot be addressed")));
    }
    Ok(BitSizeReport {
        tokens,
        epsilon,
        bits,
        buckets: 1u64 << bits,
    })
}

/// Accuracy-per-cost trade-off `B(ε) = −ln(3ε)·ε²`, defined on `(0, 1/3]`.
pub fn benefit(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon, true)?;
    Ok(-(3.0 * epsilon).ln() * epsilon * epsilon)
}

/// Maximizer of [`benefit`]: `1 / (3√e)`.
pub fn optimal_epsilon() -> f64 {
    1.0 / (3.0 * std::f64::consts::E.sqrt())
}
