//! Runtime cluster selection, pose-extrapolating prefetch and residency
//! accounting over a [`ClusteredSceneStore`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::compiler::{pose_feature, PoseFeature, PoseNormalization};
use crate::error::{Error, Result};
use crate::frame::{FrameStats, Image};
use crate::io::container::{Chunk, ChunkId, ClusteredSceneStore};
use crate::kmeans::sq_dist;
use crate::math;
use crate::pipeline::{self, RenderConfig};
use crate::scene::{CameraPose, Gaussian3D};

/// What runtime selection needs from the compiled manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSelector {
    pub centroids: Vec<PoseFeature>,
    pub normalization: PoseNormalization,
    pub beta: f64,
}

impl ClusterSelector {
    pub fn from_store(store: &ClusteredSceneStore) -> Self {
        let m = store.manifest();
        Self {
            centroids: m.centroids(),
            normalization: m.normalization(),
            beta: m.beta,
        }
    }

    pub fn select(&self, cam: &CameraPose, m: usize) -> Result<Vec<u32>> {
        select_clusters(cam, &self.centroids, &self.normalization, self.beta, m)
    }
}

/// Nearest centroid first, then the `m` next nearest; ties go to the
/// smaller cluster id.
pub fn select_clusters(
    cam: &CameraPose,
    centroids: &[PoseFeature],
    normalization: &PoseNormalization,
    beta: f64,
    m: usize,
) -> Result<Vec<u32>> {
    if m >= centroids.len() {
        return Err(Error::InvalidArgument(format!(
            "M = {m} must be below the cluster count {}",
            centroids.len()
        )));
    }
    let f = pose_feature(cam, beta, normalization);
    let mut ranked: Vec<(f64, u32)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (sq_dist(&f.0, &c.0), i as u32))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(m + 1).map(|(_, c)| c).collect())
}

/// Constant-velocity extrapolation of `curr` one step past `prev`.
pub fn predict_pose(prev: &CameraPose, curr: &CameraPose) -> CameraPose {
    let mut out = *curr;
    out.position = math::add(curr.position, math::sub(curr.position, prev.position));
    out.orientation = math::quat_slerp(prev.orientation, curr.orientation, 2.0).unwrap_or(curr.orientation);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Eviction {
    /// Drop every cluster outside the current and predicted selections.
    #[default]
    Immediate,
    /// Keep up to `capacity` exclusive chunks, evicting the least recently
    /// selected first. Current and predicted selections are never evicted.
    Lru { capacity: usize },
}

/// Chosen per chunk id; lets tests perturb loader timing.
pub type LoaderDelay = Arc<dyn Fn(ChunkId) -> Duration + Send + Sync>;

#[derive(Clone)]
pub struct ResidencyConfig {
    pub m: usize,
    pub prefetch: bool,
    pub eviction: Eviction,
    pub loader_delay: Option<LoaderDelay>,
}

impl std::fmt::Debug for ResidencyConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidencyConfig")
            .field("m", &self.m)
            .field("prefetch", &self.prefetch)
            .field("eviction", &self.eviction)
            .field("loader_delay", &self.loader_delay.is_some())
            .finish()
    }
}

impl Default for ResidencyConfig {
    fn default() -> Self {
        Self {
            m: crate::compiler::DEFAULT_NEIGHBORS,
            prefetch: true,
            eviction: Eviction::Immediate,
            loader_delay: None,
        }
    }
}

/// Residency bookkeeping. A cluster counts as resident once it is committed,
/// i.e. loaded synchronously or handed to the loader; this keeps the byte
/// accounting independent of loader timing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResidencyState {
    pub resident_clusters: BTreeSet<u32>,
    pub shared_resident: bool,
    pub resident_bytes: u64,
    pub peak_resident_bytes: u64,
    pub stall_count: u64,
    pub prefetch_hit_count: u64,
}

enum LoaderMsg {
    Prefetch(Vec<ChunkId>),
}

struct Loader {
    tx: Option<Sender<LoaderMsg>>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Loader {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Renders frames from a clustered scene, keeping only the selected
/// clusters resident and prefetching the ones a linear pose prediction
/// will need next.
pub struct ResidentRenderer {
    store: Arc<ClusteredSceneStore>,
    selector: ClusterSelector,
    config: ResidencyConfig,
    shared: Arc<Chunk>,
    /// Clusters the loader may materialize; eviction and loads serialize on it.
    wanted: Arc<Mutex<BTreeSet<u32>>>,
    state: ResidencyState,
    last_use: BTreeMap<u32, u64>,
    prev: Option<CameraPose>,
    frame: u64,
    loader: Option<Loader>,
}

impl std::fmt::Debug for ResidentRenderer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidentRenderer")
            .field("store", &self.store)
            .field("config", &self.config)
            .field("state", &self.state)
            .finish()
    }
}

impl ResidentRenderer {
    pub fn new(store: Arc<ClusteredSceneStore>, config: ResidencyConfig) -> Result<Self> {
        let selector = ClusterSelector::from_store(&store);
        if config.m >= selector.centroids.len() {
            return Err(Error::InvalidArgument(format!(
                "M = {} must be below the cluster count {}",
                config.m,
                selector.centroids.len()
            )));
        }
        let shared = store.materialize(ChunkId::Shared)?;
        let wanted = Arc::new(Mutex::new(BTreeSet::new()));
        let loader = config
            .prefetch
            .then(|| spawn_loader(Arc::clone(&store), Arc::clone(&wanted), config.loader_delay.clone()));
        let shared_bytes = store.chunk_bytes(ChunkId::Shared);
        let state = ResidencyState {
            shared_resident: true,
            resident_bytes: shared_bytes,
            peak_resident_bytes: shared_bytes,
            ..ResidencyState::default()
        };
        Ok(Self {
            store,
            selector,
            config,
            shared,
            wanted,
            state,
            last_use: BTreeMap::new(),
            prev: None,
            frame: 0,
            loader,
        })
    }

    pub fn state(&self) -> &ResidencyState {
        &self.state
    }

    pub fn store(&self) -> &ClusteredSceneStore {
        &self.store
    }

    pub fn selector(&self) -> &ClusterSelector {
        &self.selector
    }

    fn update_bytes(&mut self) {
        let m = self.store.manifest();
        self.state.resident_bytes = m.shared_bytes()
            + self
                .state
                .resident_clusters
                .iter()
                .map(|&c| m.chunk_bytes(ChunkId::Cluster(c)))
                .sum::<u64>();
        self.state.peak_resident_bytes = self.state.peak_resident_bytes.max(self.state.resident_bytes);
    }

    /// Shrinks the committed set to `keep` (plus LRU survivors), releasing
    /// everything else from the store.
    fn evict_except(&mut self, keep: &BTreeSet<u32>) {
        let mut wanted = self.wanted.lock().unwrap();
        let mut candidates: Vec<u32> = self
            .state
            .resident_clusters
            .iter()
            .copied()
            .filter(|c| !keep.contains(c))
            .collect();
        let survivors = match self.config.eviction {
            Eviction::Immediate => 0,
            Eviction::Lru { capacity } => capacity.saturating_sub(keep.len()),
        };
        // most recently used first, then by id
        candidates.sort_by_key(|c| (std::cmp::Reverse(self.last_use.get(c).copied().unwrap_or(0)), *c));
        for &c in candidates.iter().skip(survivors) {
            self.state.resident_clusters.remove(&c);
            wanted.remove(&c);
            self.store.release(ChunkId::Cluster(c));
        }
        drop(wanted);
        self.update_bytes();
    }

    /// Renders one frame: select, evict, load what is missing, rasterize the
    /// working set, then queue the predicted selection for prefetch.
    pub fn render_frame(&mut self, cam: &CameraPose, cfg: &RenderConfig) -> Result<(Image, FrameStats)> {
        let selection = self.selector.select(cam, self.config.m)?;
        let sel_set: BTreeSet<u32> = selection.iter().copied().collect();
        self.frame += 1;
        for &c in &selection {
            self.last_use.insert(c, self.frame);
        }
        self.evict_except(&sel_set);

        let (mut stalls, mut hits) = (0, 0);
        {
            let mut wanted = self.wanted.lock().unwrap();
            for &c in &selection {
                if self.state.resident_clusters.insert(c) {
                    stalls += 1;
                } else {
                    hits += 1;
                }
                wanted.insert(c);
            }
        }
        self.update_bytes();
        let chunks = selection
            .iter()
            .map(|&c| self.store.materialize(ChunkId::Cluster(c)))
            .collect::<Result<Vec<_>>>()?;
        let working = assemble_working_set(&self.shared, &chunks);
        let (image, mut stats) = pipeline::render(&working, cam, self.store.sh_degree(), cfg)?;

        let predicted = match &self.prev {
            Some(prev) => predict_pose(prev, cam),
            None => *cam,
        };
        self.prev = Some(*cam);
        if self.config.prefetch {
            let next = self.selector.select(&predicted, self.config.m)?;
            let mut keep = sel_set.clone();
            keep.extend(next.iter().copied());
            for &c in &next {
                self.last_use.insert(c, self.frame);
            }
            self.evict_except(&keep);
            let mut queued = Vec::new();
            {
                let mut wanted = self.wanted.lock().unwrap();
                for &c in &next {
                    if self.state.resident_clusters.insert(c) {
                        queued.push(ChunkId::Cluster(c));
                    }
                    wanted.insert(c);
                }
            }
            self.update_bytes();
            if let Some(tx) = self.loader.as_ref().and_then(|l| l.tx.as_ref()) {
                if !queued.is_empty() {
                    // the loader only exits once the sender is dropped
                    let _ = tx.send(LoaderMsg::Prefetch(queued));
                }
            }
        }

        self.state.stall_count += stalls;
        self.state.prefetch_hit_count += hits;
        stats.frame = self.frame - 1;
        stats.stalls = stalls;
        stats.prefetch_hits = hits;
        stats.resident_bytes = self.state.resident_bytes;
        Ok((image, stats))
    }
}

fn spawn_loader(
    store: Arc<ClusteredSceneStore>,
    wanted: Arc<Mutex<BTreeSet<u32>>>,
    delay: Option<LoaderDelay>,
) -> Loader {
    let (tx, rx) = mpsc::channel::<LoaderMsg>();
    let handle = std::thread::spawn(move || {
        for LoaderMsg::Prefetch(ids) in rx {
            for id in ids {
                if let Some(d) = &delay {
                    std::thread::sleep(d(id));
                }
                let wanted = wanted.lock().unwrap();
                let ChunkId::Cluster(c) = id else { continue };
                if wanted.contains(&c) {
                    // failures resurface on the render thread's own load
                    let _ = store.materialize(id);
                }
            }
        }
    });
    Loader {
        tx: Some(tx),
        handle: Some(handle),
    }
}

/// Shared plus selected exclusive gaussians in original-id order, so the
/// result renders exactly like the same subset of the flat scene.
pub fn assemble_working_set(shared: &Chunk, clusters: &[Arc<Chunk>]) -> Vec<Gaussian3D> {
    let mut all: Vec<(u32, &Gaussian3D)> = shared.ids.iter().copied().zip(&shared.gaussians).collect();
    for c in clusters {
        all.extend(c.ids.iter().copied().zip(&c.gaussians));
    }
    all.sort_by_key(|(id, _)| *id);
    all.into_iter().map(|(_, g)| *g).collect()
}

/// Original ids of the working set for `selection`, ascending.
pub fn working_set_ids(store: &ClusteredSceneStore, selection: &[u32]) -> Result<Vec<u32>> {
    let mut ids = store.read_chunk(ChunkId::Shared)?.ids;
    for &c in selection {
        ids.extend(store.read_chunk(ChunkId::Cluster(c))?.ids);
    }
    ids.sort_unstable();
    Ok(ids)
}
