//! Tile rasterization: the reference front-to-back compositor, the
//! contribution-aware variant that gates each `w × w` pixel group on its
//! leader pixel, and the warp-lockstep cost model both engines report.
//!
//! A gaussian is considered at a pixel only inside its 3σ support and when
//! its α reaches `alpha_theta`; this makes the composite independent of how
//! splats were binned to tiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{TileGrid, ALPHA_THETA, MAX_RADIUS_SQ};
use crate::scene::ProjectedGaussian;

/// Transmittance below which a pixel stops accumulating.
pub const GAMMA_THETA: f64 = 1e-4;
pub const ALPHA_MAX: f64 = 0.99;
pub const WARP_SIZE: usize = 32;

/// Lockstep cost counters, in warp steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpCost {
    pub alpha_eval_steps: u64,
    pub blend_steps: u64,
    pub leader_eval_steps: u64,
    pub warp_steps: u64,
}

impl WarpCost {
    pub fn add(&mut self, o: &WarpCost) {
        self.alpha_eval_steps += o.alpha_eval_steps;
        self.blend_steps += o.blend_steps;
        self.leader_eval_steps += o.leader_eval_steps;
        self.warp_steps += o.warp_steps;
    }

    /// One gaussian visiting one reference warp: every live lane evaluates α
    /// together, then the warp blends if any live lane passed.
    pub fn charge_reference(&mut self, any_live: bool, any_blend: bool) {
        if !any_live {
            return;
        }
        self.alpha_eval_steps += 1;
        self.warp_steps += 1;
        if any_blend {
            self.blend_steps += 1;
            self.warp_steps += 1;
        }
    }

    /// One gaussian visiting one contribution-aware warp: the leaders test
    /// first; only when some leader passes do the group lanes evaluate and
    /// blend, which is group-uniform and so occupies a single warp step.
    pub fn charge_contribution_aware(&mut self, any_live: bool, any_leader_pass: bool) {
        if !any_live {
            return;
        }
        self.leader_eval_steps += 1;
        self.warp_steps += 1;
        if any_leader_pass {
            self.alpha_eval_steps += 1;
            self.blend_steps += 1;
            self.warp_steps += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelState {
    pub accum_color: [f64; 3],
    pub transmittance: f64,
    pub done: bool,
}

impl PixelState {
    fn fresh() -> Self {
        Self {
            accum_color: [0.0; 3],
            transmittance: 1.0,
            done: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterParams {
    pub alpha_theta: f64,
    pub gamma_theta: f64,
    pub background: [f64; 3],
}

impl Default for RasterParams {
    fn default() -> Self {
        Self {
            alpha_theta: ALPHA_THETA,
            gamma_theta: GAMMA_THETA,
            background: [0.0; 3],
        }
    }
}

/// The sorted splat list of one tile.
#[derive(Debug, Clone, Copy)]
pub struct TileView<'a> {
    pub grid: &'a TileGrid,
    pub tile_id: u32,
    pub gaussians: &'a [ProjectedGaussian],
    /// Front-to-back references into `gaussians`.
    pub order: &'a [u32],
}

impl TileView<'_> {
    fn pixel_count(&self) -> usize {
        (self.grid.tile_size * self.grid.tile_size) as usize
    }

    /// Image coordinates of a tile-local pixel index.
    pub fn pixel_coords(&self, local: usize) -> [u32; 2] {
        let ts = self.grid.tile_size as usize;
        let [ox, oy] = self.grid.tile_origin(self.tile_id);
        [ox + (local % ts) as u32, oy + (local / ts) as u32]
    }

    fn center(&self, local: usize) -> [f64; 2] {
        let [x, y] = self.pixel_coords(local);
        [f64::from(x) + 0.5, f64::from(y) + 0.5]
    }

    fn inside(&self, local: usize) -> bool {
        let [x, y] = self.pixel_coords(local);
        x < self.grid.width && y < self.grid.height
    }

    fn check(&self) -> Result<()> {
        let mut prev = f32::NEG_INFINITY;
        for &r in self.order {
            let g = self
                .gaussians
                .get(r as usize)
                .ok_or_else(|| Error::Contract(format!("gaussian reference {r} out of range")))?;
            if g.depth < prev {
                return Err(Error::Contract(format!(
                    "tile {} is not sorted front to back",
                    self.tile_id
                )));
            }
            prev = g.depth;
        }
        Ok(())
    }
}

/// `o · exp(-½ Δᵀ Σ'⁻¹ Δ)`, clamped above at 0.99.
#[inline]
pub fn alpha(pg: &ProjectedGaussian, p: [f64; 2]) -> f64 {
    (pg.opacity * (-0.5 * pg.mahalanobis_sq(p)).exp()).min(ALPHA_MAX)
}

/// α as used by the engines: zero outside the 3σ support.
#[inline]
pub fn sample_alpha(pg: &ProjectedGaussian, p: [f64; 2]) -> f64 {
    let m = pg.mahalanobis_sq(p);
    if m > MAX_RADIUS_SQ {
        0.0
    } else {
        (pg.opacity * (-0.5 * m).exp()).min(ALPHA_MAX)
    }
}

/// Hooks into the compositing loop. Pixel indices are tile-local; `rank` is
/// the position in the tile's front-to-back order.
pub trait RasterObserver {
    fn on_blend(&mut self, _pixel: usize, _rank: usize, _gaussian_ref: u32, _alpha: f64, _transmittance: f64) {}

    /// Called for each live pixel of a group whose leader rejected the gaussian.
    fn on_group_skip(&mut self, _pixel: usize, _rank: usize, _gaussian_ref: u32, _transmittance: f64) {}

    /// Cost charged to warp `warp` of the tile for the splat at `rank`.
    fn on_warp(&mut self, _rank: usize, _warp: usize, _charged: &WarpCost) {}
}

impl RasterObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TileOutput {
    /// Tile-local row-major; pixels outside the image are left untouched.
    pub pixels: Vec<PixelState>,
    pub cost: WarpCost,
    pub pixel_alpha_evals: u64,
    pub pixel_blends: u64,
}

struct TileState {
    pixels: Vec<PixelState>,
    live: usize,
    evals: u64,
    blends: u64,
}

impl TileState {
    fn new(view: &TileView<'_>) -> Self {
        let mut pixels = vec![PixelState::fresh(); view.pixel_count()];
        let mut live = 0;
        for (l, p) in pixels.iter_mut().enumerate() {
            if view.inside(l) {
                live += 1;
            } else {
                p.done = true;
            }
        }
        Self {
            pixels,
            live,
            evals: 0,
            blends: 0,
        }
    }

    #[inline]
    fn blend(
        &mut self,
        l: usize,
        a: f64,
        color: &[f64; 3],
        gamma_theta: f64,
        rank: usize,
        r: u32,
        obs: &mut impl RasterObserver,
    ) {
        let px = &mut self.pixels[l];
        let t = px.transmittance;
        obs.on_blend(l, rank, r, a, t);
        let w = t * a;
        for c in 0..3 {
            px.accum_color[c] += w * color[c];
        }
        px.transmittance = t * (1.0 - a);
        self.blends += 1;
        if px.transmittance < gamma_theta {
            px.done = true;
            self.live -= 1;
        }
    }

    fn finish(mut self, view: &TileView<'_>, params: &RasterParams, cost: WarpCost) -> TileOutput {
        for (l, px) in self.pixels.iter_mut().enumerate() {
            if view.inside(l) {
                for c in 0..3 {
                    px.accum_color[c] += px.transmittance * params.background[c];
                }
            }
        }
        TileOutput {
            pixels: self.pixels,
            cost,
            pixel_alpha_evals: self.evals,
            pixel_blends: self.blends,
        }
    }
}

/// Composites every pixel against the full sorted list.
pub fn rasterize_reference(
    view: &TileView<'_>,
    params: &RasterParams,
    obs: &mut impl RasterObserver,
) -> Result<TileOutput> {
    view.check()?;
    let mut st = TileState::new(view);
    let mut cost = WarpCost::default();
    let n = st.pixels.len();
    let centers: Vec<[f64; 2]> = (0..n).map(|l| view.center(l)).collect();

    for (rank, &r) in view.order.iter().enumerate() {
        if st.live == 0 {
            break;
        }
        let g = &view.gaussians[r as usize];
        for (wi, warp_start) in (0..n).step_by(WARP_SIZE).enumerate() {
            let mut any_live = false;
            let mut any_blend = false;
            for l in warp_start..(warp_start + WARP_SIZE).min(n) {
                if st.pixels[l].done {
                    continue;
                }
                any_live = true;
                let a = sample_alpha(g, centers[l]);
                st.evals += 1;
                if a < params.alpha_theta {
                    continue;
                }
                any_blend = true;
                st.blend(l, a, &g.color, params.gamma_theta, rank, r, obs);
            }
            let mut step = WarpCost::default();
            step.charge_reference(any_live, any_blend);
            obs.on_warp(rank, wi, &step);
            cost.add(&step);
        }
    }
    Ok(st.finish(view, params, cost))
}

/// Tile-local pixel indices of each `w × w` group, leader (top-left) first,
/// groups in row-major order.
fn pixel_groups(tile_size: usize, w: usize) -> Vec<Vec<usize>> {
    let per_row = tile_size / w;
    (0..per_row * per_row)
        .map(|gi| {
            let (gx, gy) = (gi % per_row, gi / per_row);
            let mut members = Vec::with_capacity(w * w);
            for dy in 0..w {
                for dx in 0..w {
                    members.push((gy * w + dy) * tile_size + gx * w + dx);
                }
            }
            members
        })
        .collect()
}

fn check_group_width(view: &TileView<'_>, w: u32) -> Result<()> {
    if !matches!(w, 1 | 2 | 4) || view.grid.tile_size % w != 0 {
        return Err(Error::InvalidArgument(format!(
            "group width {w} must be 1, 2 or 4 and divide the tile size"
        )));
    }
    Ok(())
}

/// Contribution-aware compositing: per gaussian, each group's leader
/// evaluates α first and the whole group skips the gaussian when the leader
/// falls under `alpha_theta`. Surviving groups blend exactly like the
/// reference engine. A warp holds `32 / w²` consecutive groups.
pub fn rasterize_contribution_aware(
    view: &TileView<'_>,
    group_w: u32,
    params: &RasterParams,
    obs: &mut impl RasterObserver,
) -> Result<TileOutput> {
    check_group_width(view, group_w)?;
    view.check()?;
    let mut st = TileState::new(view);
    let mut cost = WarpCost::default();
    let n = st.pixels.len();
    let centers: Vec<[f64; 2]> = (0..n).map(|l| view.center(l)).collect();
    let groups = pixel_groups(view.grid.tile_size as usize, group_w as usize);
    let groups_per_warp = (WARP_SIZE / (group_w * group_w) as usize).max(1);

    for (rank, &r) in view.order.iter().enumerate() {
        if st.live == 0 {
            break;
        }
        let g = &view.gaussians[r as usize];
        for (wi, warp) in groups.chunks(groups_per_warp).enumerate() {
            let mut any_live = false;
            let mut any_pass = false;
            for members in warp {
                if members.iter().all(|&l| st.pixels[l].done) {
                    continue;
                }
                any_live = true;
                let leader = members[0];
                let a0 = sample_alpha(g, centers[leader]);
                st.evals += 1;
                if a0 < params.alpha_theta {
                    for &l in members {
                        if !st.pixels[l].done {
                            obs.on_group_skip(l, rank, r, st.pixels[l].transmittance);
                        }
                    }
                    continue;
                }
                any_pass = true;
                for &l in members {
                    if st.pixels[l].done {
                        continue;
                    }
                    let a = if l == leader {
                        a0
                    } else {
                        st.evals += 1;
                        sample_alpha(g, centers[l])
                    };
                    if a < params.alpha_theta {
                        continue;
                    }
                    st.blend(l, a, &g.color, params.gamma_theta, rank, r, obs);
                }
            }
            let mut step = WarpCost::default();
            step.charge_contribution_aware(any_live, any_pass);
            obs.on_warp(rank, wi, &step);
            cost.add(&step);
        }
    }
    Ok(st.finish(view, params, cost))
}

fn max_channel(c: &[f64; 3]) -> f64 {
    c[0].max(c[1]).max(c[2])
}

struct BoundObserver<'a> {
    view: &'a TileView<'a>,
    centers: Vec<[f64; 2]>,
    alpha_theta: f64,
    gamma_theta: f64,
    /// max channel over later splats and the background, per rank
    suffix_max: Vec<f64>,
    skipped_mass: Vec<f64>,
    any_skip: Vec<bool>,
    /// transmittance under the reference schedule, frozen once it terminates
    shadow_gamma: Vec<f64>,
    shadow_done: Vec<bool>,
}

impl BoundObserver<'_> {
    fn shadow_step(&mut self, l: usize, a: f64) {
        if self.shadow_done[l] {
            return;
        }
        self.shadow_gamma[l] *= 1.0 - a;
        if self.shadow_gamma[l] < self.gamma_theta {
            self.shadow_done[l] = true;
        }
    }
}

impl RasterObserver for BoundObserver<'_> {
    fn on_blend(&mut self, l: usize, _rank: usize, _r: u32, a: f64, _t: f64) {
        self.shadow_step(l, a);
    }

    fn on_group_skip(&mut self, l: usize, rank: usize, r: u32, t: f64) {
        let g = &self.view.gaussians[r as usize];
        let a = sample_alpha(g, self.centers[l]);
        if a < self.alpha_theta {
            return;
        }
        let k = max_channel(&g.color).max(self.suffix_max[rank]);
        self.skipped_mass[l] += t * a * k;
        self.any_skip[l] = true;
        self.shadow_step(l, a);
    }
}

/// Per-pixel upper bound on `|contribution-aware − reference|` (any channel).
///
/// Absolute allowance for f64 round-off between the two compositing orders.
/// The analytic bound can be attained exactly, leaving only rounding noise.
pub const BOUND_ROUNDING: f64 = 1e-12;

/// Replays the contribution-aware schedule. Each gaussian a group skips at a
/// pixel where it would have blended adds `Γ·α·K`, with `Γ` the pixel's
/// transmittance at that point and `K` the largest channel among that splat,
/// every later splat in the tile and the background. When a pixel lost
/// anything, early termination of either schedule adds its final
/// transmittance times the tile-wide `K`. Pixels with any skip also get
/// [`BOUND_ROUNDING`].
pub fn skipped_contribution_bound(
    view: &TileView<'_>,
    group_w: u32,
    params: &RasterParams,
) -> Result<Vec<f64>> {
    check_group_width(view, group_w)?;
    let n = view.pixel_count();
    let bg = max_channel(&params.background);
    let mut suffix_max = vec![bg; view.order.len()];
    let mut running = bg;
    for k in (0..view.order.len()).rev() {
        suffix_max[k] = running;
        running = running.max(max_channel(&view.gaussians[view.order[k] as usize].color));
    }
    let tile_max = running;

    let mut obs = BoundObserver {
        view,
        centers: (0..n).map(|l| view.center(l)).collect(),
        alpha_theta: params.alpha_theta,
        gamma_theta: params.gamma_theta,
        suffix_max,
        skipped_mass: vec![0.0; n],
        any_skip: vec![false; n],
        shadow_gamma: vec![1.0; n],
        shadow_done: vec![false; n],
    };
    let out = rasterize_contribution_aware(view, group_w, params, &mut obs)?;

    Ok((0..n)
        .map(|l| {
            if !obs.any_skip[l] {
                return 0.0;
            }
            let mut bound = obs.skipped_mass[l];
            let px = &out.pixels[l];
            if px.done && view.inside(l) {
                bound += px.transmittance * tile_max;
            }
            if obs.shadow_done[l] {
                bound += obs.shadow_gamma[l] * tile_max;
            }
            bound + BOUND_ROUNDING
        })
        .collect())
}
