//! Per-frame preprocessing: near-plane culling, EWA projection, color
//! evaluation and opacity-aware tile binning.

use crate::error::{Error, Result};
use crate::math::{self, Mat3};
use crate::scene::{covariance3d, eval_sh, CameraPose, Gaussian3D, ProjectedGaussian, ShDegree};

pub const DEFAULT_TILE_SIZE: u32 = 16;
/// Default skip threshold on α.
pub const ALPHA_THETA: f64 = 1.0 / 255.0;
/// 3σ envelope, as a squared Mahalanobis distance.
pub const MAX_RADIUS_SQ: f64 = 9.0;
/// Screen-space low-pass added to the projected covariance diagonal.
pub const COV2D_DILATION: f64 = 0.3;
pub const MIN_COV2D_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub width: u32,
    pub height: u32,
}

impl TileGrid {
    pub fn new(width: u32, height: u32, tile_size: u32) -> Result<Self> {
        if tile_size == 0 {
            return Err(Error::InvalidArgument("tile size must be positive".into()));
        }
        if width < tile_size || height < tile_size {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} is smaller than one {tile_size}px tile"
            )));
        }
        Ok(Self {
            tile_size,
            tiles_x: width.div_ceil(tile_size),
            tiles_y: height.div_ceil(tile_size),
            width,
            height,
        })
    }

    pub fn for_camera(cam: &CameraPose, tile_size: u32) -> Result<Self> {
        Self::new(cam.width, cam.height, tile_size)
    }

    pub fn num_tiles(&self) -> u32 {
        self.tiles_x * self.tiles_y
    }

    /// Top-left pixel of a tile.
    pub fn tile_origin(&self, tile_id: u32) -> [u32; 2] {
        [
            (tile_id % self.tiles_x) * self.tile_size,
            (tile_id / self.tiles_x) * self.tile_size,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileIntersection {
    pub tile_id: u32,
    /// Index into the frame's projected list.
    pub gaussian_ref: u32,
    pub depth: f32,
}

/// Why a splat produced no [`ProjectedGaussian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Culled,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectOptions {
    pub alpha_theta: f64,
    /// Shrink the binning extent by opacity; otherwise use the fixed 3σ.
    pub opacity_aware: bool,
    pub sh_degree: ShDegree,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            alpha_theta: ALPHA_THETA,
            opacity_aware: true,
            sh_degree: ShDegree::MAX,
        }
    }
}

/// Affine approximation of the world-to-pixel map at view-space point `t`,
/// composed with the world-to-view rotation. Rows are d(u)/d(world), d(v)/d(world).
pub fn projection_jacobian(cam: &CameraPose, t: [f64; 3]) -> [[f64; 3]; 2] {
    let (fx, fy) = cam.focal();
    let [x, y, z] = t;
    let j = [
        [fx / z, 0.0, -fx * x / (z * z)],
        [0.0, fy / z, -fy * y / (z * z)],
    ];
    let w: Mat3 = math::transpose(&cam.rotation());
    let mut out = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| j[r][k] * w[k][c]).sum();
        }
    }
    out
}

/// Pixel coordinates of a world point; `None` behind the camera plane.
pub fn project_point(cam: &CameraPose, p: [f64; 3]) -> Option<[f64; 2]> {
    let t = cam.to_view(p);
    if t[2] <= 0.0 {
        return None;
    }
    let (fx, fy) = cam.focal();
    let (cx, cy) = cam.principal_point();
    Some([fx * t[0] / t[2] + cx, fy * t[1] / t[2] + cy])
}

/// Projects one splat. Returns the reason when it is dropped.
pub fn project(
    g: &Gaussian3D,
    cam: &CameraPose,
    opts: &ProjectOptions,
) -> std::result::Result<ProjectedGaussian, Rejection> {
    let pos = g.position();
    let t = cam.to_view(pos);
    if t[2] <= cam.near_clip {
        return Err(Rejection::Culled);
    }
    let (fx, fy) = cam.focal();
    let (cx, cy) = cam.principal_point();
    let mean2d = [fx * t[0] / t[2] + cx, fy * t[1] / t[2] + cy];

    let jw = projection_jacobian(cam, t);
    let sigma = covariance3d(g);
    // cov2d = JW Σ (JW)ᵀ
    let mut js = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            js[r][c] = (0..3).map(|k| jw[r][k] * sigma[k][c]).sum();
        }
    }
    let entry = |r: usize, c: usize| -> f64 { (0..3).map(|k| js[r][k] * jw[c][k]).sum() };
    let a = entry(0, 0) + COV2D_DILATION;
    let b = 0.5 * (entry(0, 1) + entry(1, 0));
    let c = entry(1, 1) + COV2D_DILATION;
    let det = a * c - b * b;
    if !(det > MIN_COV2D_DET) || !det.is_finite() {
        return Err(Rejection::Degenerate);
    }
    let inv_det = 1.0 / det;

    let opacity = g.opacity();
    let radius_sq_cutoff = if opts.opacity_aware {
        effective_radius_sq(opacity, opts.alpha_theta)
    } else {
        MAX_RADIUS_SQ
    };
    let dir = math::normalize(math::sub(pos, cam.position));
    Ok(ProjectedGaussian {
        mean2d,
        inv_cov2d: [c * inv_det, -b * inv_det, a * inv_det],
        cov2d: [a, b, c],
        depth: t[2] as f32,
        color: eval_sh(&g.sh, dir, opts.sh_degree),
        opacity,
        radius_sq_cutoff,
    })
}

/// Squared Mahalanobis radius beyond which α falls under `alpha_theta`,
/// capped at the 3σ envelope.
pub fn effective_radius_sq(opacity: f64, alpha_theta: f64) -> f64 {
    (2.0 * (opacity / alpha_theta).ln()).min(MAX_RADIUS_SQ).max(0.0)
}

/// Half-extents of the axis-aligned box around the cutoff ellipse.
pub fn aabb_half_extents(pg: &ProjectedGaussian) -> [f64; 2] {
    [
        (pg.radius_sq_cutoff * pg.cov2d[0]).sqrt(),
        (pg.radius_sq_cutoff * pg.cov2d[2]).sqrt(),
    ]
}

/// Inclusive tile-coordinate range touched by the splat's box, or `None`.
pub fn tile_rect(pg: &ProjectedGaussian, grid: &TileGrid) -> Option<([u32; 2], [u32; 2])> {
    if !(pg.radius_sq_cutoff > 0.0) {
        return None;
    }
    let [hx, hy] = aabb_half_extents(pg);
    let ts = f64::from(grid.tile_size);
    // A tile [a, a+ts) overlaps (lo, hi) when lo < a + ts and hi > a.
    let range = |m: f64, h: f64, tiles: u32, extent: u32| -> Option<(u32, u32)> {
        let lo = m - h;
        let hi = m + h;
        if !(hi > 0.0) || !(lo < f64::from(extent)) {
            return None;
        }
        let first = (lo / ts).floor().max(0.0) as u32;
        let last_f = (hi / ts).ceil() - 1.0;
        let last = (last_f.max(0.0) as u32).min(tiles - 1);
        if first > last {
            None
        } else {
            Some((first, last))
        }
    };
    let (x0, x1) = range(pg.mean2d[0], hx, grid.tiles_x, grid.width)?;
    let (y0, y1) = range(pg.mean2d[1], hy, grid.tiles_y, grid.height)?;
    Some(([x0, y0], [x1, y1]))
}

/// One intersection per tile overlapped by the splat's cutoff box.
pub fn bin_tiles(pg: &ProjectedGaussian, gaussian_ref: u32, grid: &TileGrid) -> Vec<TileIntersection> {
    let Some(([x0, y0], [x1, y1])) = tile_rect(pg, grid) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(((x1 - x0 + 1) * (y1 - y0 + 1)) as usize);
    for ty in y0..=y1 {
        for tx in x0..=x1 {
            out.push(TileIntersection {
                tile_id: ty * grid.tiles_x + tx,
                gaussian_ref,
                depth: pg.depth,
            });
        }
    }
    out
}
