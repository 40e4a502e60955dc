//! Whole-frame rendering: preprocess → sort → rasterize, tiles in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{FrameStats, Image};
use crate::preprocess::{self, ProjectOptions, Rejection, TileGrid, TileIntersection, ALPHA_THETA, DEFAULT_TILE_SIZE};
use crate::raster::{self, RasterObserver, RasterParams, TileOutput, TileView, GAMMA_THETA};
use crate::scene::{CameraPose, Gaussian3D, ProjectedGaussian, ShDegree};
use crate::sort::{sort_intersections, SortedTileRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Reference,
    ContributionAware { group_w: u32 },
}

impl Engine {
    pub fn name(&self) -> String {
        match self {
            Engine::Reference => "ref".into(),
            Engine::ContributionAware { group_w } => format!("cr{group_w}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub engine: Engine,
    pub background: [f64; 3],
    pub alpha_theta: f64,
    pub gamma_theta: f64,
    pub tile_size: u32,
    /// Use the opacity-shrunk extent for binning instead of the fixed 3σ.
    pub opacity_aware: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Reference,
            background: [0.0; 3],
            alpha_theta: ALPHA_THETA,
            gamma_theta: GAMMA_THETA,
            tile_size: DEFAULT_TILE_SIZE,
            opacity_aware: true,
        }
    }
}

impl RenderConfig {
    pub fn raster_params(&self) -> RasterParams {
        RasterParams {
            alpha_theta: self.alpha_theta,
            gamma_theta: self.gamma_theta,
            background: self.background,
        }
    }
}

/// Everything up to rasterization for one camera.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub grid: TileGrid,
    pub projected: Vec<ProjectedGaussian>,
    /// Index of each projected splat in the input list.
    pub source: Vec<u32>,
    pub sorted: Vec<TileIntersection>,
    pub ranges: Vec<SortedTileRange>,
    pub culled: u64,
    pub degenerate: u64,
}

impl PreparedFrame {
    /// Sorted references for each tile, indexed by tile id.
    pub fn tile_orders(&self) -> Vec<Vec<u32>> {
        let mut orders = vec![Vec::new(); self.grid.num_tiles() as usize];
        for r in &self.ranges {
            orders[r.tile_id as usize] = self.sorted[r.start..r.end].iter().map(|e| e.gaussian_ref).collect();
        }
        orders
    }
}

pub fn prepare(
    gaussians: &[Gaussian3D],
    cam: &CameraPose,
    sh_degree: ShDegree,
    cfg: &RenderConfig,
) -> Result<PreparedFrame> {
    let grid = TileGrid::for_camera(cam, cfg.tile_size)?;
    if !(cfg.alpha_theta > 0.0 && cfg.alpha_theta < 1.0) {
        return Err(Error::InvalidArgument("alpha_theta must lie in (0, 1)".into()));
    }
    let opts = ProjectOptions {
        alpha_theta: cfg.alpha_theta,
        opacity_aware: cfg.opacity_aware,
        sh_degree,
    };
    let results: Vec<std::result::Result<ProjectedGaussian, Rejection>> =
        gaussians.par_iter().map(|g| preprocess::project(g, cam, &opts)).collect();

    let mut projected = Vec::with_capacity(results.len());
    let mut source = Vec::with_capacity(results.len());
    let (mut culled, mut degenerate) = (0, 0);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(pg) => {
                projected.push(pg);
                source.push(i as u32);
            }
            Err(Rejection::Culled) => culled += 1,
            Err(Rejection::Degenerate) => degenerate += 1,
        }
    }
    let intersections: Vec<TileIntersection> = projected
        .par_iter()
        .enumerate()
        .map(|(i, pg)| preprocess::bin_tiles(pg, i as u32, &grid))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let (sorted, ranges) = sort_intersections(intersections);
    Ok(PreparedFrame {
        grid,
        projected,
        source,
        sorted,
        ranges,
        culled,
        degenerate,
    })
}

/// Runs the configured engine over every tile. `make_observer` builds one
/// observer per tile; they are returned in tile order.
pub fn rasterize_frame<O, F>(frame: &PreparedFrame, cfg: &RenderConfig, make_observer: F) -> Result<(Image, FrameStats, Vec<O>)>
where
    O: RasterObserver + Send,
    F: Fn(u32) -> O + Sync,
{
    let params = cfg.raster_params();
    let orders = frame.tile_orders();
    let tiles: Vec<Result<(TileOutput, O)>> = orders
        .par_iter()
        .enumerate()
        .map(|(tile_id, order)| {
            let view = TileView {
                grid: &frame.grid,
                tile_id: tile_id as u32,
                gaussians: &frame.projected,
                order,
            };
            let mut obs = make_observer(tile_id as u32);
            let out = match cfg.engine {
                Engine::Reference => raster::rasterize_reference(&view, &params, &mut obs)?,
                Engine::ContributionAware { group_w } => {
                    raster::rasterize_contribution_aware(&view, group_w, &params, &mut obs)?
                }
            };
            Ok((out, obs))
        })
        .collect();

    let grid = &frame.grid;
    let mut image = Image::filled(grid.width, grid.height, cfg.background);
    let mut stats = FrameStats {
        culled: frame.culled,
        degenerate: frame.degenerate,
        tile_pairs: frame.sorted.len() as u64,
        ..FrameStats::default()
    };
    let mut observers = Vec::with_capacity(tiles.len());
    let ts = grid.tile_size;
    for (tile_id, t) in tiles.into_iter().enumerate() {
        let (out, obs) = t?;
        let [ox, oy] = grid.tile_origin(tile_id as u32);
        for (l, px) in out.pixels.iter().enumerate() {
            let (x, y) = (ox + l as u32 % ts, oy + l as u32 / ts);
            if x < grid.width && y < grid.height {
                image.set(x, y, px.accum_color);
            }
        }
        stats.pixel_alpha_evals += out.pixel_alpha_evals;
        stats.pixel_blends += out.pixel_blends;
        stats.warp.add(&out.cost);
        observers.push(obs);
    }
    Ok((image, stats, observers))
}

pub fn render(
    gaussians: &[Gaussian3D],
    cam: &CameraPose,
    sh_degree: ShDegree,
    cfg: &RenderConfig,
) -> Result<(Image, FrameStats)> {
    let frame = prepare(gaussians, cam, sh_degree, cfg)?;
    let (image, mut stats, _) = rasterize_frame(&frame, cfg, |_| ())?;
    stats.gaussians_in = gaussians.len() as u64;
    Ok((image, stats))
}

/// Records every blend as `(tile-local pixel, projected ref, Γ·α)`.
#[derive(Debug, Default)]
pub struct ContributionLog {
    pub entries: Vec<(u32, u32, f64)>,
}

impl RasterObserver for ContributionLog {
    fn on_blend(&mut self, pixel: usize, _rank: usize, r: u32, a: f64, t: f64) {
        self.entries.push((pixel as u32, r, t * a));
    }
}

/// Per-pixel `(source index, Γ·α)` lists from a reference render, in blend
/// order, row-major over the image.
pub fn pixel_contributions(
    gaussians: &[Gaussian3D],
    cam: &CameraPose,
    sh_degree: ShDegree,
    cfg: &RenderConfig,
) -> Result<Vec<Vec<(u32, f64)>>> {
    let cfg = RenderConfig {
        engine: Engine::Reference,
        ..*cfg
    };
    let frame = prepare(gaussians, cam, sh_degree, &cfg)?;
    let (_, _, logs) = rasterize_frame(&frame, &cfg, |_| ContributionLog::default())?;
    let grid = &frame.grid;
    let mut per_pixel = vec![Vec::new(); (grid.width * grid.height) as usize];
    for (tile_id, log) in logs.into_iter().enumerate() {
        let [ox, oy] = grid.tile_origin(tile_id as u32);
        for (l, r, w) in log.entries {
            let (x, y) = (ox + l % grid.tile_size, oy + l / grid.tile_size);
            per_pixel[(y * grid.width + x) as usize].push((frame.source[r as usize], w));
        }
    }
    Ok(per_pixel)
}
