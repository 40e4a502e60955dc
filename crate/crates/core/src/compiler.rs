//! Offline scene compiler: cluster training poses, harvest each cluster's
//! top contributors, and split the scene into shared, per-cluster exclusive
//! and discarded gaussians.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kmeans;
use crate::math;
use crate::pipeline::{self, RenderConfig};
use crate::preprocess::ALPHA_THETA;
use crate::scene::{CameraPose, Gaussian3D, ShDegree};

pub const DEFAULT_CLUSTERS: usize = 24;
pub const DEFAULT_TOP_K: usize = 32;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_SHARE_THRESHOLD: usize = 2;
pub const DEFAULT_NEIGHBORS: usize = 4;
pub const DEFAULT_GROUP_W: u32 = 2;

/// Camera-position normalization shared by compile time and runtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNormalization {
    pub mean: [f64; 3],
    pub scale: f64,
}

impl PoseNormalization {
    /// Mean position and the largest distance to it (1 when all coincide).
    pub fn from_poses(poses: &[CameraPose]) -> Self {
        let n = poses.len().max(1) as f64;
        let mut mean = [0.0; 3];
        for p in poses {
            mean = math::add(mean, p.position);
        }
        mean = math::scale(mean, 1.0 / n);
        let radius = poses
            .iter()
            .map(|p| math::norm(math::sub(p.position, mean)))
            .fold(0.0, f64::max);
        Self {
            mean,
            scale: if radius > 0.0 { radius } else { 1.0 },
        }
    }
}

/// `(normalized position, β · forward)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFeature(pub [f64; 6]);

impl PoseFeature {
    pub fn distance(&self, other: &PoseFeature) -> f64 {
        kmeans::sq_dist(&self.0, &other.0).sqrt()
    }
}

pub fn pose_feature(cam: &CameraPose, beta: f64, norm: &PoseNormalization) -> PoseFeature {
    let x = math::scale(math::sub(cam.position, norm.mean), 1.0 / norm.scale);
    let v = math::scale(cam.forward(), beta);
    PoseFeature([x[0], x[1], x[2], v[0], v[1], v[2]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub centroid: PoseFeature,
    pub member_poses: Vec<CameraPose>,
    /// Indices into the pose list that was clustered.
    pub member_indices: Vec<usize>,
    pub top_set: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseClustering {
    pub clusters: Vec<ClusterSpec>,
    pub normalization: PoseNormalization,
    pub assignment: Vec<usize>,
}

pub fn cluster_poses(poses: &[CameraPose], n: usize, beta: f64, seed: u64) -> Result<PoseClustering> {
    if n == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if poses.len() < n {
        return Err(Error::InvalidArgument(format!(
            "{} poses cannot form {n} clusters",
            poses.len()
        )));
    }
    let normalization = PoseNormalization::from_poses(poses);
    let features: Vec<[f64; 6]> = poses.iter().map(|p| pose_feature(p, beta, &normalization).0).collect();
    let km = kmeans::kmeans(&features, n, seed);
    let mut clusters: Vec<ClusterSpec> = km
        .centroids
        .iter()
        .map(|c| ClusterSpec {
            centroid: PoseFeature(*c),
            member_poses: Vec::new(),
            member_indices: Vec::new(),
            top_set: BTreeSet::new(),
        })
        .collect();
    for (i, &a) in km.assignment.iter().enumerate() {
        clusters[a].member_poses.push(poses[i]);
        clusters[a].member_indices.push(i);
    }
    Ok(PoseClustering {
        clusters,
        normalization,
        assignment: km.assignment,
    })
}

/// Per-pixel top-`k` by `Γ·α` (ties to the smaller id), unioned over
/// every pixel of every member pose.
pub fn harvest_top_contributors(
    cluster: &ClusterSpec,
    gaussians: &[Gaussian3D],
    sh_degree: ShDegree,
    k: usize,
    cfg: &RenderConfig,
) -> Result<BTreeSet<u32>> {
    if cluster.member_poses.is_empty() {
        return Err(Error::InvalidArgument("cluster has no member poses".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    let per_pose: Vec<Result<BTreeSet<u32>>> = cluster
        .member_poses
        .par_iter()
        .map(|cam| {
            let contributions = pipeline::pixel_contributions(gaussians, cam, sh_degree, cfg)?;
            let mut set = BTreeSet::new();
            for mut list in contributions {
                top_k_in_place(&mut list, k);
                set.extend(list.iter().map(|(id, _)| *id));
            }
            Ok(set)
        })
        .collect();
    let mut union = BTreeSet::new();
    for s in per_pose {
        union.extend(s?);
    }
    Ok(union)
}

/// Keeps the `k` largest contributions, ordered by weight then id.
pub fn top_k_in_place(list: &mut Vec<(u32, f64)>, k: usize) {
    list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    list.truncate(k);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub shared: Vec<u32>,
    pub exclusive: Vec<Vec<u32>>,
    pub discarded: Vec<u32>,
}

/// Splits ids by how many top sets name them. Ids named by at least
/// `share_threshold` sets are shared, ids named by exactly one are exclusive
/// to that cluster, the rest are discarded. Ids named by several sets but
/// fewer than the threshold are also shared: an id can be exclusive to only
/// one cluster, and every nominating cluster needs it.
pub fn partition(top_sets: &[BTreeSet<u32>], total: usize, share_threshold: usize) -> Partition {
    let threshold = share_threshold.max(1);
    let mut count = vec![0usize; total];
    let mut owner = vec![usize::MAX; total];
    for (c, set) in top_sets.iter().enumerate() {
        for &id in set {
            let i = id as usize;
            count[i] += 1;
            if owner[i] == usize::MAX {
                owner[i] = c;
            }
        }
    }
    let mut out = Partition {
        shared: Vec::new(),
        exclusive: vec![Vec::new(); top_sets.len()],
        discarded: Vec::new(),
    };
    for id in 0..total {
        let n = count[id];
        if n == 0 {
            out.discarded.push(id as u32);
        } else if n >= threshold || n >= 2 {
            out.shared.push(id as u32);
        } else {
            out.exclusive[owner[id]].push(id as u32);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileParams {
    pub clusters: usize,
    pub top_k: usize,
    pub beta: f64,
    pub share_threshold: usize,
    pub seed: u64,
    /// Runtime neighbor count recorded in the manifest.
    pub m: usize,
    /// Runtime group width recorded in the manifest.
    pub group_w: u32,
    pub alpha_theta: f64,
    /// Extra poses sampled by interpolating between consecutive training poses.
    pub extra_pose_samples: usize,
}

impl Default for CompileParams {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            top_k: DEFAULT_TOP_K,
            beta: DEFAULT_BETA,
            share_threshold: DEFAULT_SHARE_THRESHOLD,
            seed: 0,
            m: DEFAULT_NEIGHBORS,
            group_w: DEFAULT_GROUP_W,
            alpha_theta: ALPHA_THETA,
            extra_pose_samples: 0,
        }
    }
}

/// Compiler output: the id partition plus what runtime selection needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredScene {
    pub shared: Vec<u32>,
    pub exclusive: Vec<Vec<u32>>,
    pub discarded: Vec<u32>,
    pub centroids: Vec<PoseFeature>,
    pub normalization: PoseNormalization,
    pub params: CompileParams,
    pub total_count: usize,
    /// Cluster index of every training pose.
    pub pose_assignment: Vec<usize>,
}

impl ClusteredScene {
    /// Shared, exclusive and discarded sets are pairwise disjoint and cover
    /// every id.
    pub fn validate(&self) -> Result<()> {
        if self.centroids.len() != self.exclusive.len() {
            return Err(Error::Contract("centroid count differs from cluster count".into()));
        }
        let mut seen = vec![false; self.total_count];
        let all = self
            .shared
            .iter()
            .chain(self.exclusive.iter().flatten())
            .chain(&self.discarded);
        for &id in all {
            let slot = seen
                .get_mut(id as usize)
                .ok_or_else(|| Error::Contract(format!("gaussian id {id} out of range")))?;
            if *slot {
                return Err(Error::Contract(format!("gaussian {id} assigned twice")));
            }
            *slot = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Contract("partition does not cover every gaussian".into()));
        }
        Ok(())
    }

    pub fn retained_count(&self) -> usize {
        self.total_count - self.discarded.len()
    }
}

fn sample_extra_poses(poses: &[CameraPose], count: usize, seed: u64) -> Vec<CameraPose> {
    if poses.len() < 2 || count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..poses.len() - 1);
            let t: f64 = rng.random();
            let (a, b) = (&poses[i], &poses[i + 1]);
            let mut p = *b;
            p.position = math::add(a.position, math::scale(math::sub(b.position, a.position), t));
            p.orientation = math::quat_slerp(a.orientation, b.orientation, t).unwrap_or(b.orientation);
            p
        })
        .collect()
}

pub fn compile(
    gaussians: &[Gaussian3D],
    sh_degree: ShDegree,
    poses: &[CameraPose],
    params: &CompileParams,
) -> Result<ClusteredScene> {
    if gaussians.is_empty() {
        return Err(Error::InvalidArgument("scene has no gaussians".into()));
    }
    if params.m >= params.clusters {
        return Err(Error::InvalidArgument(format!(
            "neighbor count M = {} must be below the cluster count {}",
            params.m, params.clusters
        )));
    }
    let mut all_poses = poses.to_vec();
    all_poses.extend(sample_extra_poses(poses, params.extra_pose_samples, params.seed));
    let clustering = cluster_poses(&all_poses, params.clusters, params.beta, params.seed)?;

    let cfg = RenderConfig {
        alpha_theta: params.alpha_theta,
        ..RenderConfig::default()
    };
    let top_sets = clustering
        .clusters
        .iter()
        .map(|c| harvest_top_contributors(c, gaussians, sh_degree, params.top_k, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let part = partition(&top_sets, gaussians.len(), params.share_threshold);

    let scene = ClusteredScene {
        shared: part.shared,
        exclusive: part.exclusive,
        discarded: part.discarded,
        centroids: clustering.clusters.iter().map(|c| c.centroid).collect(),
        normalization: clustering.normalization,
        params: *params,
        total_count: gaussians.len(),
        pose_assignment: clustering.assignment[..poses.len()].to_vec(),
    };
    scene.validate()?;
    Ok(scene)
}
