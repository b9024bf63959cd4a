//! Memory snapshot export and import.
//!
//! A snapshot is a JSON manifest (configuration, cluster ids, summaries and
//! members) plus a binary prototype sidecar:
//!
//! ```text
//! "CRMP" | version u32 | H u32 | d u32
//! per cluster, in manifest order: H·d f32 sums (row-major), H u32 counts
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lshproto::{ClusterPrototype, LshFamily};
use crate::matrix::Matrix;
use crate::simkernel::{ItemKind, SimilarityConfig};
use crate::softmem::{ClusterSummary, Member, MemoryConfig, RestoredCluster, SoftMemory};
use crate::trainer::{Embed, RawItem};

pub const PROTOTYPE_MAGIC: &[u8; 4] = b"CRMP";
pub const PROTOTYPE_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "memory.json";
pub const SIDECAR_FILE: &str = "prototypes.crmp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub config: ManifestConfig,
    pub clusters: Vec<ManifestCluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub bits: u32,
    pub dim: usize,
    pub max_tokens: usize,
    pub lsh_seed: u64,
    pub seed: u64,
    pub next_cluster_id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCluster {
    pub id: u64,
    pub summary: ClusterSummary,
    pub members: Vec<ManifestMember>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMember {
    pub id: String,
    pub kind: ItemKind,
    pub distance: f64,
}

/// Dense prototypes decoded from a sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSidecar {
    pub buckets: usize,
    pub dim: usize,
    pub prototypes: Vec<(Matrix, Vec<u32>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemorySnapshot {
    pub manifest: Manifest,
    pub sidecar: PrototypeSidecar,
}

impl MemorySnapshot {
    pub fn from_memory(mem: &SoftMemory) -> Self {
        let cfg = mem.config();
        let fam = mem.family();
        let mut clusters = Vec::with_capacity(mem.cluster_count());
        let mut prototypes = Vec::with_capacity(mem.cluster_count());
        for c in mem.clusters() {
            let members = c
                .docs()
                .chain(c.queries())
                .map(|m| ManifestMember {
                    id: m.item.id.clone(),
                    kind: m.item.kind,
                    distance: m.distance,
                })
                .collect();
            clusters.push(ManifestCluster {
                id: c.id(),
                summary: c.summary(),
                members,
            });
            prototypes.push(c.prototype().to_dense(fam));
        }
        Self {
            manifest: Manifest {
                version: MANIFEST_VERSION,
                config: ManifestConfig {
                    lambda: cfg.lambda,
                    gamma: cfg.gamma,
                    bits: fam.bits(),
                    dim: fam.dim(),
                    max_tokens: mem.similarity().max_tokens,
                    lsh_seed: fam.seed(),
                    seed: mem.seed(),
                    next_cluster_id: mem.next_cluster_id(),
                },
                clusters,
            },
            sidecar: PrototypeSidecar {
                buckets: fam.bucket_count() as usize,
                dim: fam.dim(),
                prototypes,
            },
        }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&self.manifest)?)?;
        fs::write(dir.join(SIDECAR_FILE), encode_sidecar(&self.sidecar))?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest = parse_manifest(&fs::read(dir.join(MANIFEST_FILE))?)?;
        let sidecar = parse_sidecar(&fs::read(dir.join(SIDECAR_FILE))?)?;
        Self::from_parts(manifest, sidecar)
    }

    pub fn from_parts(manifest: Manifest, sidecar: PrototypeSidecar) -> Result<Self> {
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::format("memory manifest", format!("unsupported version {}", manifest.version)));
        }
        if manifest.clusters.len() != sidecar.prototypes.len() {
            return Err(Error::format(
                "memory snapshot",
                format!(
                    "manifest lists {} clusters, sidecar holds {}",
                    manifest.clusters.len(),
                    sidecar.prototypes.len()
                ),
            ));
        }
        if manifest.config.bits > crate::lshproto::MAX_BITS
            || sidecar.buckets != 1usize << manifest.config.bits
            || sidecar.dim != manifest.config.dim
        {
            return Err(Error::format("memory snapshot", "sidecar shape disagrees with the manifest"));
        }
        Ok(Self { manifest, sidecar })
    }

    /// Rebuilds the memory. `resolve` supplies the raw item for every member
    /// id; members are re-embedded with `encoder`. Prototypes, distances and
    /// summaries are taken from the snapshot as stored.
    pub fn restore(
        &self,
        resolve: impl Fn(&str) -> Option<Arc<RawItem>>,
        encoder: &impl Embed,
    ) -> Result<SoftMemory> {
        let c = &self.manifest.config;
        let fam = LshFamily::new(c.bits, c.dim, c.lsh_seed)?;
        let sim = SimilarityConfig::new(c.max_tokens, c.dim)?;
        let mut clusters = Vec::with_capacity(self.manifest.clusters.len());
        for (mc, (sums, counts)) in self.manifest.clusters.iter().zip(&self.sidecar.prototypes) {
            let members = mc
                .members
                .iter()
                .map(|m| {
                    let raw = resolve(&m.id).ok_or_else(|| Error::UnknownItem(m.id.clone()))?;
                    if raw.kind != m.kind {
                        return Err(Error::invalid(format!("member {} changed kind", m.id)));
                    }
                    let item = encoder.embed(&raw)?;
                    Ok(Member {
                        raw,
                        item,
                        distance: m.distance,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            clusters.push(RestoredCluster {
                id: mc.id,
                prototype: ClusterPrototype::from_dense(sums, counts)?,
                summary: mc.summary,
                members,
            });
        }
        SoftMemory::from_parts(
            MemoryConfig {
                lambda: c.lambda,
                gamma: c.gamma,
            },
            sim,
            fam,
            c.seed,
            c.next_cluster_id,
            clusters,
        )
    }
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    serde_json::from_slice(bytes).map_err(|e| Error::format("memory manifest", e.to_string()))
}

pub fn encode_sidecar(s: &PrototypeSidecar) -> Vec<u8> {
    let per = s.buckets * s.dim * 4 + s.buckets * 4;
    let mut out = Vec::with_capacity(16 + per * s.prototypes.len());
    out.extend_from_slice(PROTOTYPE_MAGIC);
    out.extend_from_slice(&PROTOTYPE_VERSION.to_le_bytes());
    out.extend_from_slice(&(s.buckets as u32).to_le_bytes());
    out.extend_from_slice(&(s.dim as u32).to_le_bytes());
    for (sums, counts) in &s.prototypes {
        for &v in sums.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &c in counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn parse_sidecar(bytes: &[u8]) -> Result<PrototypeSidecar> {
    const FMT: &str = "prototype sidecar";
    if bytes.len() < 16 {
        return Err(Error::format(FMT, "truncated header"));
    }
    if &bytes[..4] != PROTOTYPE_MAGIC {
        return Err(Error::format(FMT, "bad magic"));
    }
    let version = read_u32(bytes, 4);
    if version != PROTOTYPE_VERSION {
        return Err(Error::format(FMT, format!("unsupported version {version}")));
    }
    let buckets = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    if buckets == 0 || dim == 0 {
        return Err(Error::format(FMT, "zero bucket count or dimension"));
    }
    let per = buckets
        .checked_mul(dim)
        .and_then(|n| n.checked_add(buckets))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(FMT, "shape overflows"))?;
    let body = &bytes[16..];
    if !body.len().is_multiple_of(per) {
        return Err(Error::format(
            FMT,
            format!("body of {} bytes is not a whole number of {per}-byte prototypes", body.len()),
        ));
    }
    let prototypes = body
        .chunks_exact(per)
        .map(|chunk| {
            let (sum_bytes, count_bytes) = chunk.split_at(buckets * dim * 4);
            let sums: Vec<f64> = sum_bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if sums.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(FMT, "non-finite bucket sum"));
            }
            let counts = count_bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok((Matrix::from_vec(buckets, dim, sums)?, counts))
        })
        .collect::<Result<_>>()?;
    Ok(PrototypeSidecar {
        buckets,
        dim,
        prototypes,
    })
}
