//! Adaptive soft memory of topic clusters.
//!
//! Each cluster keeps an LSH prototype of its members' tokens and the
//! additive triplet `⟨N, LS, SS⟩` of member-to-prototype distances. New items
//! join the nearest cluster when their distance is within `μ + λσ`, otherwise
//! they open a new cluster. At the end of a session, members are re-embedded,
//! statistics are rebuilt, documents at or beyond `μ + γσ` are evicted and
//! queries are subsampled in proportion to the surviving documents.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lshproto::{ClusterPrototype, LshFamily};
use crate::matrix::{dot, normalize_in_place};
use crate::simkernel::{pooled_embedding, EmbeddedItem, ItemKind, SimilarityConfig};
use crate::trainer::{Embed, RawItem};

pub const DEFAULT_LAMBDA: f64 = 8.0;
pub const DEFAULT_GAMMA: f64 = 0.25;
/// Only the first this-many items seed the initial k-means partition.
pub const INIT_WINDOW: usize = 1024;
pub const KMEANS_MAX_ITERS: usize = 50;

/// Count, linear sum and squared sum of member distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n: u64,
    pub ls: f64,
    pub ss: f64,
}

impl ClusterSummary {
    pub fn from_distances<'a>(dists: impl IntoIterator<Item = &'a f64>) -> Self {
        dists.into_iter().fold(Self::default(), |s, &d| s.add(d))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, dist: f64) -> Self {
        Self {
            n: self.n + 1,
            ls: self.ls + dist,
            ss: self.ss + dist * dist,
        }
    }

    pub fn remove(self, dist: f64) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::SummaryUnderflow);
        }
        if self.n == 1 {
            return Ok(Self::default());
        }
        Ok(Self {
            n: self.n - 1,
            ls: self.ls - dist,
            ss: self.ss - dist * dist,
        })
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.ls / self.n as f64
        }
    }

    pub fn std(&self) -> f64 {
        if self.n <= 1 {
            return 0.0;
        }
        let mu = self.mean();
        (self.ss / self.n as f64 - mu * mu).max(0.0).sqrt()
    }

    /// `μ + factor·σ`.
    pub fn radius(&self, factor: f64) -> f64 {
        self.mean() + factor * self.std()
    }
}

/// A stored member: the raw item for re-embedding, its current embedding and
/// its last recorded distance to the cluster prototype.
#[derive(Clone, Debug)]
pub struct Member {
    pub raw: Arc<RawItem>,
    pub item: EmbeddedItem,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct Cluster {
    id: u64,
    prototype: ClusterPrototype,
    summary: ClusterSummary,
    docs: BTreeMap<String, Member>,
    queries: BTreeMap<String, Member>,
}

impl Cluster {
    fn new(id: u64, dim: usize) -> Self {
        Self {
            id,
            prototype: ClusterPrototype::empty(dim),
            summary: ClusterSummary::default(),
            docs: BTreeMap::new(),
            queries: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn prototype(&self) -> &ClusterPrototype {
        &self.prototype
    }

    pub fn summary(&self) -> ClusterSummary {
        self.summary
    }

    pub fn docs(&self) -> impl Iterator<Item = &Member> + '_ {
        self.docs.values()
    }

    pub fn queries(&self) -> impl Iterator<Item = &Member> + '_ {
        self.queries.values()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.docs.keys().map(String::as_str)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.queries.keys().map(String::as_str)
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn query_count(&self) -> usize {
        self.queries.len()
    }

    pub fn len(&self) -> usize {
        self.docs.len() + self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn member(&self, id: &str) -> Option<&Member> {
        self.docs.get(id).or_else(|| self.queries.get(id))
    }

    pub fn member_distance(&self, id: &str) -> Option<f64> {
        self.member(id).map(|m| m.distance)
    }

    fn members_mut(&mut self) -> impl Iterator<Item = &mut Member> + '_ {
        self.docs.values_mut().chain(self.queries.values_mut())
    }

    fn insert(&mut self, m: Member) {
        let map = match m.item.kind {
            ItemKind::Document => &mut self.docs,
            ItemKind::Query => &mut self.queries,
        };
        map.insert(m.item.id.clone(), m);
    }

    /// Rebuilds the prototype from all members, then every distance and the
    /// summary against the rebuilt prototype.
    fn rebuild(&mut self, fam: &LshFamily, sim: &SimilarityConfig) -> Result<()> {
        let mut proto = ClusterPrototype::empty(fam.dim());
        for m in self.docs.values().chain(self.queries.values()) {
            proto.add(&m.item, fam)?;
        }
        self.prototype = proto;
        let mut summary = ClusterSummary::default();
        if !self.is_empty() {
            let proto = &self.prototype;
            for m in self.docs.values_mut().chain(self.queries.values_mut()) {
                m.distance = proto.sim_dist(&m.item, sim)?;
                summary = summary.add(m.distance);
            }
        }
        self.summary = summary;
        Ok(())
    }
}

/// Outcome counters of [`SoftMemory::maintain`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintainStats {
    pub evicted_docs: usize,
    pub evicted_queries: usize,
    pub deleted_clusters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SoftMemory {
    clusters: BTreeMap<u64, Cluster>,
    config: MemoryConfig,
    sim: SimilarityConfig,
    fam: LshFamily,
    seed: u64,
    next_cluster_id: u64,
    index: HashMap<String, u64>,
}

impl SoftMemory {
    pub fn new(config: MemoryConfig, sim: SimilarityConfig, fam: LshFamily, seed: u64) -> Result<Self> {
        if fam.dim() != sim.dim {
            return Err(Error::DimensionMismatch {
                expected: sim.dim,
                actual: fam.dim(),
            });
        }
        if !(config.lambda.is_finite() || config.lambda == f64::INFINITY)
            || !(config.gamma.is_finite() || config.gamma == f64::INFINITY)
        {
            return Err(Error::invalid("lambda and gamma must be numbers"));
        }
        Ok(Self {
            clusters: BTreeMap::new(),
            config,
            sim,
            fam,
            seed,
            next_cluster_id: 0,
            index: HashMap::new(),
        })
    }

    pub fn config(&self) -> MemoryConfig {
        self.config
    }

    pub fn similarity(&self) -> &SimilarityConfig {
        &self.sim
    }

    pub fn family(&self) -> &LshFamily {
        &self.fam
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_cluster_id(&self) -> u64 {
        self.next_cluster_id
    }

    pub fn is_initialized(&self) -> bool {
        !self.clusters.is_empty()
    }

    pub fn clusters(&self) -> impl ExactSizeIterator<Item = &Cluster> + '_ {
        self.clusters.values()
    }

    pub fn cluster(&self, id: u64) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn doc_count(&self) -> usize {
        self.clusters.values().map(Cluster::doc_count).sum()
    }

    pub fn query_count(&self) -> usize {
        self.clusters.values().map(Cluster::query_count).sum()
    }

    pub fn cluster_of(&self, id: &str) -> Option<u64> {
        self.index.get(id).copied()
    }

    pub fn member(&self, id: &str) -> Option<&Member> {
        self.cluster_of(id)
            .and_then(|c| self.clusters.get(&c))
            .and_then(|c| c.member(id))
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_cluster_id;
        self.next_cluster_id += 1;
        id
    }

    /// Partitions the first [`INIT_WINDOW`] items into `k` clusters with
    /// spherical k-means on pooled embeddings. Items past the window are not
    /// touched; the caller assigns them.
    pub fn init_clusters(&mut self, items: &[(Arc<RawItem>, EmbeddedItem)], k: usize) -> Result<()> {
        if self.is_initialized() {
            return Err(Error::invalid("memory is already initialized"));
        }
        let window = &items[..items.len().min(INIT_WINDOW)];
        if k == 0 || k > window.len() {
            return Err(Error::invalid(format!(
                "cannot form {k} initial clusters from {} items",
                window.len()
            )));
        }
        for (_, x) in window {
            x.check(&self.sim)?;
        }
        let points: Vec<Vec<f64>> = window
            .iter()
            .map(|(_, x)| pooled_embedding(x).unwrap_or_else(|_| x.emb().row(0).to_vec()))
            .collect();
        let labels = spherical_kmeans(&points, k, self.seed, KMEANS_MAX_ITERS);

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        for members in groups {
            let id = self.fresh_id();
            let mut cluster = Cluster::new(id, self.fam.dim());
            for i in members {
                let (raw, item) = &window[i];
                if self.index.insert(item.id.clone(), id).is_some() {
                    return Err(Error::invalid(format!("duplicate item id {}", item.id)));
                }
                cluster.insert(Member {
                    raw: Arc::clone(raw),
                    item: item.clone(),
                    distance: 0.0,
                });
            }
            cluster.rebuild(&self.fam, &self.sim)?;
            self.clusters.insert(id, cluster);
        }
        Ok(())
    }

    /// Nearest cluster by prototype distance; ties go to the lower id.
    pub fn nearest(&self, x: &EmbeddedItem) -> Result<(u64, f64)> {
        let mut best: Option<(u64, f64)> = None;
        for c in self.clusters.values() {
            let d = c.prototype.sim_dist(x, &self.sim)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c.id, d));
            }
        }
        best.ok_or(Error::MemoryUninitialized)
    }

    /// The `k` clusters nearest to `x`, closest first.
    pub fn nearest_k(&self, x: &EmbeddedItem, k: usize) -> Result<Vec<(u64, f64)>> {
        if !self.is_initialized() {
            return Err(Error::MemoryUninitialized);
        }
        let mut all = self
            .clusters
            .values()
            .map(|c| Ok((c.id, c.prototype.sim_dist(x, &self.sim)?)))
            .collect::<Result<Vec<_>>>()?;
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        Ok(all)
    }

    /// Streams one item into the memory and returns the receiving cluster.
    pub fn assign(&mut self, raw: Arc<RawItem>, x: EmbeddedItem) -> Result<u64> {
        x.check(&self.sim)?;
        if self.index.contains_key(&x.id) {
            return Err(Error::invalid(format!("duplicate item id {}", x.id)));
        }
        let (cid, dist) = self.nearest(&x)?;
        let cluster = self.clusters.get_mut(&cid).expect("nearest returns a live id");
        if dist <= cluster.summary.radius(self.config.lambda) {
            cluster.prototype.add(&x, &self.fam)?;
            cluster.summary = cluster.summary.add(dist);
            self.index.insert(x.id.clone(), cid);
            cluster.insert(Member {
                raw,
                item: x,
                distance: dist,
            });
            return Ok(cid);
        }
        let id = self.fresh_id();
        let mut cluster = Cluster::new(id, self.fam.dim());
        cluster.prototype.add(&x, &self.fam)?;
        let own = cluster.prototype.sim_dist(&x, &self.sim)?;
        cluster.summary = ClusterSummary::default().add(own);
        self.index.insert(x.id.clone(), id);
        cluster.insert(Member {
            raw,
            item: x,
            distance: own,
        });
        self.clusters.insert(id, cluster);
        Ok(id)
    }

    /// Re-embeds every member and rebuilds prototypes and summaries.
    pub fn reembed(&mut self, encoder: &impl Embed) -> Result<()> {
        for cluster in self.clusters.values_mut() {
            for m in cluster.members_mut() {
                m.item = encoder.embed(&m.raw)?;
            }
            cluster.rebuild(&self.fam, &self.sim)?;
        }
        Ok(())
    }

    /// End-of-session decay.
    ///
    /// Per cluster: re-embed and rebuild, evict documents with distance
    /// `≥ μ + γσ` (statistics taken once before eviction), keep
    /// `round(|Q|·kept/before)` queries at random (at least one if any
    /// document survives), drop empty clusters and rebuild the rest.
    pub fn maintain(&mut self, encoder: &impl Embed, session: usize) -> Result<MaintainStats> {
        let mut stats = MaintainStats::default();
        let ids: Vec<u64> = self.clusters.keys().copied().collect();
        for cid in ids {
            let cluster = self.clusters.get_mut(&cid).expect("id from key set");
            for m in cluster.members_mut() {
                m.item = encoder.embed(&m.raw)?;
            }
            cluster.rebuild(&self.fam, &self.sim)?;

            let threshold = eviction_threshold(&cluster.summary, self.config.gamma);
            let before = cluster.docs.len();
            let evicted: Vec<String> = cluster
                .docs
                .iter()
                .filter(|(_, m)| m.distance >= threshold)
                .map(|(id, _)| id.clone())
                .collect();
            for id in &evicted {
                cluster.docs.remove(id);
                self.index.remove(id);
            }
            stats.evicted_docs += evicted.len();

            let keep = retained_query_count(cluster.queries.len(), before, cluster.docs.len());
            if keep < cluster.queries.len() {
                let mut qids: Vec<String> = cluster.queries.keys().cloned().collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, session as u64, cid));
                qids.shuffle(&mut rng);
                for id in &qids[keep..] {
                    cluster.queries.remove(id);
                    self.index.remove(id);
                }
                stats.evicted_queries += qids.len() - keep;
            }

            if cluster.is_empty() {
                self.clusters.remove(&cid);
                stats.deleted_clusters += 1;
            } else {
                cluster.rebuild(&self.fam, &self.sim)?;
            }
        }
        Ok(stats)
    }

    /// Reassembles a memory from exported parts. Used by snapshot import.
    pub(crate) fn from_parts(
        config: MemoryConfig,
        sim: SimilarityConfig,
        fam: LshFamily,
        seed: u64,
        next_cluster_id: u64,
        clusters: Vec<RestoredCluster>,
    ) -> Result<Self> {
        let mut mem = Self::new(config, sim, fam, seed)?;
        mem.next_cluster_id = next_cluster_id;
        for rc in clusters {
            if rc.id >= next_cluster_id || mem.clusters.contains_key(&rc.id) {
                return Err(Error::invalid(format!("invalid cluster id {}", rc.id)));
            }
            let mut c = Cluster::new(rc.id, mem.fam.dim());
            c.prototype = rc.prototype;
            c.summary = rc.summary;
            for m in rc.members {
                if mem.index.insert(m.item.id.clone(), rc.id).is_some() {
                    return Err(Error::invalid(format!("duplicate item id {}", m.item.id)));
                }
                c.insert(m);
            }
            if c.len() as u64 != c.summary.n {
                return Err(Error::invalid(format!(
                    "cluster {} summary counts {} members but lists {}",
                    rc.id,
                    c.summary.n,
                    c.len()
                )));
            }
            mem.clusters.insert(rc.id, c);
        }
        Ok(mem)
    }
}

pub(crate) struct RestoredCluster {
    pub id: u64,
    pub prototype: ClusterPrototype,
    pub summary: ClusterSummary,
    pub members: Vec<Member>,
}

/// Retention radius `μ + γσ`; members at or beyond it are evicted.
pub fn eviction_threshold(summary: &ClusterSummary, gamma: f64) -> f64 {
    summary.radius(gamma)
}

/// Number of queries kept when `docs_after` of `docs_before` documents
/// survive: proportional, rounded half up, at least one while any document
/// survives, none once the documents are gone.
pub fn retained_query_count(queries: usize, docs_before: usize, docs_after: usize) -> usize {
    if docs_after == 0 || docs_before == 0 {
        return 0;
    }
    let exact = queries as f64 * docs_after as f64 / docs_before as f64;
    ((exact + 0.5).floor() as usize).clamp(1.min(queries), queries)
}

/// Mixes a run seed with two stream coordinates into a fresh seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Cosine k-means with k-means++ seeding. Every label in `0..k` is used
/// provided `k ≤ points.len()`.
pub fn spherical_kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Vec<usize> {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k must be in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut best_sim: Vec<f64> = points.iter().map(|p| dot(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let weights: Vec<f64> = best_sim.iter().map(|s| (1.0 - s).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            if chosen.contains(&pick) {
                (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
            } else {
                pick
            }
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (s, p) in best_sim.iter_mut().zip(points) {
            *s = s.max(dot(p, &points[next]));
        }
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut labels = vec![usize::MAX; n];

    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest_center(p, &centers);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // Refill empty clusters with the worst-fitting point of a larger one.
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let victim = (0..n)
                .filter(|&i| sizes[labels[i]] > 1)
                .min_by(|&a, &b| {
                    let sa = dot(&points[a], &centers[labels[a]]);
                    let sb = dot(&points[b], &centers[labels[b]]);
                    sa.total_cmp(&sb).then(a.cmp(&b))
                })
                .expect("some cluster has more than one member when k <= n");
            sizes[labels[victim]] -= 1;
            labels[victim] = c;
            sizes[c] = 1;
            changed = true;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut sum = vec![0.0; center.len()];
            for (p, _) in points.iter().zip(&labels).filter(|(_, &l)| l == c) {
                sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
            if normalize_in_place(&mut sum) > 0.0 {
                *center = sum;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let s = dot(p, center);
        if s > best_s {
            best_s = s;
            best = c;
        }
    }
    best
}
