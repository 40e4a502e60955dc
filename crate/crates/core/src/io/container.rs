//! On-disk clustered scene: a JSON manifest plus fixed-stride binary chunks.
//!
//! Each chunk file holds `count` records of 59 little-endian `f32`
//! (position, log-scale, rotation wxyz, opacity logit, 48 SH coefficients in
//! channel-major order) followed by `count` little-endian `u32` ids that
//! index the source PLY.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::compiler::{ClusteredScene, PoseFeature, PoseNormalization};
use crate::error::{Error, Result};
use crate::scene::{Gaussian3D, ShDegree, SH_COEFFS};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FLOATS_PER_GAUSSIAN: usize = 59;
/// Payload plus the parallel id entry.
pub const BYTES_PER_GAUSSIAN: u64 = (FLOATS_PER_GAUSSIAN * 4 + 4) as u64;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub count: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub centroid: [f64; 6],
    pub count: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationEntry {
    pub mean: [f64; 3],
    pub scale: f64,
}

/// `manifest.json`. The first block of fields is the stable schema; the rest
/// carries what runtime selection needs to recompute pose features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub num_clusters: usize,
    pub k: usize,
    pub beta: f64,
    pub group_w: u32,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha_theta: f64,
    pub shared: ChunkEntry,
    pub clusters: Vec<ClusterEntry>,
    pub discarded_count: u64,
    pub total_count: u64,
    pub share_threshold: usize,
    pub seed: u64,
    pub sh_degree: u32,
    pub normalization: NormalizationEntry,
}

impl Manifest {
    pub fn centroids(&self) -> Vec<PoseFeature> {
        self.clusters.iter().map(|c| PoseFeature(c.centroid)).collect()
    }

    pub fn normalization(&self) -> PoseNormalization {
        PoseNormalization {
            mean: self.normalization.mean,
            scale: self.normalization.scale,
        }
    }

    pub fn chunk_count(&self, id: ChunkId) -> Option<u64> {
        match id {
            ChunkId::Shared => Some(self.shared.count),
            ChunkId::Cluster(c) => self.clusters.get(c as usize).map(|e| e.count),
        }
    }

    pub fn chunk_bytes(&self, id: ChunkId) -> u64 {
        self.chunk_count(id).unwrap_or(0) * BYTES_PER_GAUSSIAN
    }

    /// Bytes of the whole source scene in the same encoding.
    pub fn flat_bytes(&self) -> u64 {
        self.total_count * BYTES_PER_GAUSSIAN
    }

    /// Bytes retained after discarding (shared plus every cluster).
    pub fn retained_bytes(&self) -> u64 {
        self.shared_bytes() + (0..self.num_clusters as u32).map(|c| self.chunk_bytes(ChunkId::Cluster(c))).sum::<u64>()
    }

    pub fn shared_bytes(&self) -> u64 {
        self.chunk_bytes(ChunkId::Shared)
    }
}

/// What was written by [`write_clustered_scene`].
pub type ClusteredSceneFile = Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkId {
    Shared,
    Cluster(u32),
}

impl std::fmt::Display for ChunkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChunkId::Shared => write!(f, "shared"),
            ChunkId::Cluster(c) => write!(f, "cluster {c}"),
        }
    }
}

/// A materialized chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub id: ChunkId,
    pub ids: Vec<u32>,
    pub gaussians: Vec<Gaussian3D>,
}

fn encode_chunk(ids: &[u32], gaussians: &[Gaussian3D]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ids.len() * BYTES_PER_GAUSSIAN as usize);
    for &id in ids {
        let g = &gaussians[id as usize];
        let mut push = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        g.position.iter().for_each(|&v| push(v));
        g.log_scale.iter().for_each(|&v| push(v));
        g.rotation.iter().for_each(|&v| push(v));
        push(g.opacity_logit);
        g.sh.iter().flatten().for_each(|&v| push(v));
    }
    for &id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

fn decode_chunk(id: ChunkId, count: usize, bytes: &[u8]) -> Result<Chunk> {
    let expected = count * BYTES_PER_GAUSSIAN as usize;
    if bytes.len() != expected {
        return Err(Error::corruption(
            id.to_string(),
            format!("chunk holds {} bytes, manifest implies {expected}", bytes.len()),
        ));
    }
    let f = |i: usize| f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let mut gaussians = Vec::with_capacity(count);
    for r in 0..count {
        let b = r * FLOATS_PER_GAUSSIAN;
        let mut sh = [[0f32; SH_COEFFS]; 3];
        for (c, channel) in sh.iter_mut().enumerate() {
            for (k, v) in channel.iter_mut().enumerate() {
                *v = f(b + 11 + c * SH_COEFFS + k);
            }
        }
        let g = Gaussian3D {
            position: [f(b), f(b + 1), f(b + 2)],
            log_scale: [f(b + 3), f(b + 4), f(b + 5)],
            rotation: [f(b + 6), f(b + 7), f(b + 8), f(b + 9)],
            opacity_logit: f(b + 10),
            sh,
        };
        let finite = (0..FLOATS_PER_GAUSSIAN).all(|k| f(b + k).is_finite());
        if !finite {
            return Err(Error::corruption(id.to_string(), format!("non-finite value in record {r}")));
        }
        gaussians.push(g);
    }
    let id_base = count * FLOATS_PER_GAUSSIAN * 4;
    let ids = (0..count)
        .map(|r| {
            let o = id_base + 4 * r;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap())
        })
        .collect();
    Ok(Chunk { id, ids, gaussians })
}

fn chunk_file_name(id: ChunkId) -> String {
    match id {
        ChunkId::Shared => "shared.bin".to_string(),
        ChunkId::Cluster(c) => format!("cluster_{c:03}.bin"),
    }
}

/// Writes the manifest and every chunk into `dir` (created if missing).
pub fn write_clustered_scene(
    scene: &ClusteredScene,
    gaussians: &[Gaussian3D],
    sh_degree: ShDegree,
    dir: impl AsRef<Path>,
) -> Result<ClusteredSceneFile> {
    let dir = dir.as_ref();
    scene.validate()?;
    if scene.total_count != gaussians.len() {
        return Err(Error::InvalidArgument(format!(
            "clustered scene covers {} gaussians, scene has {}",
            scene.total_count,
            gaussians.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let write_chunk = |id: ChunkId, ids: &[u32]| -> Result<ChunkEntry> {
        let file = chunk_file_name(id);
        let path = dir.join(&file);
        fs::write(&path, encode_chunk(ids, gaussians)).map_err(|e| Error::io(&path, e))?;
        Ok(ChunkEntry {
            count: ids.len() as u64,
            file,
        })
    };

    let shared = write_chunk(ChunkId::Shared, &scene.shared)?;
    let mut clusters = Vec::with_capacity(scene.exclusive.len());
    for (c, ids) in scene.exclusive.iter().enumerate() {
        let entry = write_chunk(ChunkId::Cluster(c as u32), ids)?;
        clusters.push(ClusterEntry {
            centroid: scene.centroids[c].0,
            count: entry.count,
            file: entry.file,
        });
    }
    let h = &scene.params;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        num_clusters: scene.exclusive.len(),
        k: h.top_k,
        beta: h.beta,
        group_w: h.group_w,
        m: h.m,
        alpha_theta: h.alpha_theta,
        shared,
        clusters,
        discarded_count: scene.discarded.len() as u64,
        total_count: scene.total_count as u64,
        share_threshold: h.share_threshold,
        seed: h.seed,
        sh_degree: sh_degree.get(),
        normalization: NormalizationEntry {
            mean: scene.normalization.mean,
            scale: scene.normalization.scale,
        },
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

enum Slot {
    Loading(u64),
    Ready(Arc<Chunk>),
}

/// Handle over a clustered scene directory. The manifest is parsed eagerly;
/// chunk payloads are read only when materialized.
///
/// Concurrent `materialize` calls for the same chunk perform a single read;
/// the others block until it is published and share the result.
pub struct ClusteredSceneStore {
    dir: PathBuf,
    manifest: Manifest,
    slots: Mutex<(HashMap<ChunkId, Slot>, u64)>,
    published: Condvar,
    disk_reads: AtomicU64,
}

impl std::fmt::Debug for ClusteredSceneStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClusteredSceneStore")
            .field("dir", &self.dir)
            .field("num_clusters", &self.manifest.num_clusters)
            .finish()
    }
}

pub fn load_clustered_scene(dir: impl AsRef<Path>) -> Result<ClusteredSceneStore> {
    ClusteredSceneStore::open(dir)
}

impl ClusteredSceneStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Self::check_manifest(&dir, &manifest)?;
        Ok(Self {
            dir,
            manifest,
            slots: Mutex::new((HashMap::new(), 0)),
            published: Condvar::new(),
            disk_reads: AtomicU64::new(0),
        })
    }

    fn check_manifest(dir: &Path, m: &Manifest) -> Result<()> {
        if m.version != MANIFEST_VERSION {
            return Err(Error::corruption(None, format!("unsupported manifest version {}", m.version)));
        }
        if m.clusters.len() != m.num_clusters {
            return Err(Error::corruption(
                None,
                format!("manifest lists {} clusters but num_clusters = {}", m.clusters.len(), m.num_clusters),
            ));
        }
        if m.num_clusters == 0 {
            return Err(Error::corruption(None, "manifest has no clusters"));
        }
        let listed: u64 = m.shared.count + m.clusters.iter().map(|c| c.count).sum::<u64>();
        if listed + m.discarded_count != m.total_count {
            return Err(Error::corruption(
                None,
                format!(
                    "chunk counts {listed} + discarded {} != total {}",
                    m.discarded_count, m.total_count
                ),
            ));
        }
        if !(m.normalization.scale > 0.0) {
            return Err(Error::corruption(None, "non-positive pose normalization scale"));
        }
        ShDegree::new(m.sh_degree).map_err(|e| Error::corruption(None, e.to_string()))?;
        let entries = std::iter::once((ChunkId::Shared, &m.shared.file, m.shared.count)).chain(
            m.clusters
                .iter()
                .enumerate()
                .map(|(c, e)| (ChunkId::Cluster(c as u32), &e.file, e.count)),
        );
        for (id, file, count) in entries {
            let path = dir.join(file);
            let len = fs::metadata(&path)
                .map_err(|_| Error::corruption(id.to_string(), format!("missing chunk file {file}")))?
                .len();
            if len != count * BYTES_PER_GAUSSIAN {
                return Err(Error::corruption(
                    id.to_string(),
                    format!("chunk file is {len} bytes, expected {}", count * BYTES_PER_GAUSSIAN),
                ));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sh_degree(&self) -> ShDegree {
        ShDegree::new(self.manifest.sh_degree).expect("validated at open")
    }

    pub fn chunk_bytes(&self, id: ChunkId) -> u64 {
        self.manifest.chunk_bytes(id)
    }

    /// Number of chunk reads that hit the filesystem.
    pub fn disk_reads(&self) -> u64 {
        self.disk_reads.load(Ordering::Relaxed)
    }

    /// Reads a chunk from disk without touching the cache.
    pub fn read_chunk(&self, id: ChunkId) -> Result<Chunk> {
        let (file, count) = match id {
            ChunkId::Shared => (&self.manifest.shared.file, self.manifest.shared.count),
            ChunkId::Cluster(c) => {
                let e = self
                    .manifest
                    .clusters
                    .get(c as usize)
                    .ok_or_else(|| Error::InvalidArgument(format!("no cluster {c}")))?;
                (&e.file, e.count)
            }
        };
        let path = self.dir.join(file);
        self.disk_reads.fetch_add(1, Ordering::Relaxed);
        let bytes = fs::read(&path)
            .map_err(|e| Error::corruption(id.to_string(), format!("cannot read {}: {e}", path.display())))?;
        let chunk = decode_chunk(id, count as usize, &bytes)?;
        if chunk.ids.iter().any(|&i| u64::from(i) >= self.manifest.total_count) {
            return Err(Error::corruption(id.to_string(), "gaussian id out of range"));
        }
        Ok(chunk)
    }

    /// Returns the chunk, reading it at most once while it stays cached.
    pub fn materialize(&self, id: ChunkId) -> Result<Arc<Chunk>> {
        let mut guard = self.slots.lock().unwrap();
        let generation = loop {
            match guard.0.get(&id) {
                Some(Slot::Ready(c)) => return Ok(Arc::clone(c)),
                Some(Slot::Loading(_)) => guard = self.published.wait(guard).unwrap(),
                None => {
                    guard.1 += 1;
                    let generation = guard.1;
                    guard.0.insert(id, Slot::Loading(generation));
                    break generation;
                }
            }
        };
        drop(guard);

        let result = self.read_chunk(id).map(Arc::new);

        let mut guard = self.slots.lock().unwrap();
        let still_wanted = matches!(guard.0.get(&id), Some(Slot::Loading(g)) if *g == generation);
        if still_wanted {
            match &result {
                Ok(c) => {
                    guard.0.insert(id, Slot::Ready(Arc::clone(c)));
                }
                Err(_) => {
                    guard.0.remove(&id);
                }
            }
        }
        drop(guard);
        self.published.notify_all();
        result
    }

    pub fn is_resident(&self, id: ChunkId) -> bool {
        matches!(self.slots.lock().unwrap().0.get(&id), Some(Slot::Ready(_)))
    }

    /// Drops the cached copy (or abandons an in-flight read).
    pub fn release(&self, id: ChunkId) {
        self.slots.lock().unwrap().0.remove(&id);
        self.published.notify_all();
    }

    pub fn resident_chunks(&self) -> Vec<ChunkId> {
        let guard = self.slots.lock().unwrap();
        let mut ids: Vec<ChunkId> = guard
            .0
            .iter()
            .filter(|(_, s)| matches!(s, Slot::Ready(_)))
            .map(|(id, _)| *id)
            .collect();
        ids.sort();
        ids
    }

    /// Reads every chunk and checks that ids are unique and account for the
    /// whole source scene together with the discarded count.
    pub fn validate_partition(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut all = vec![ChunkId::Shared];
        all.extend((0..self.manifest.num_clusters as u32).map(ChunkId::Cluster));
        for id in all {
            let chunk = self.read_chunk(id)?;
            for gid in chunk.ids {
                if !seen.insert(gid) {
                    return Err(Error::corruption(id.to_string(), format!("gaussian {gid} appears twice")));
                }
            }
        }
        if seen.len() as u64 + self.manifest.discarded_count != self.manifest.total_count {
            return Err(Error::corruption(None, "partition does not cover the scene"));
        }
        Ok(())
    }
}
