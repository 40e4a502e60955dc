//! Image quality metrics and the per-pixel contribution distribution.

use crate::error::{Error, Result};
use crate::frame::Image;
use crate::pipeline::{self, ContributionLog, Engine, RenderConfig};
use crate::scene::{CameraPose, Gaussian3D, ShDegree};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Coverage level used by [`ContributionCdf::fraction_for_coverage`].
pub const COVERAGE: f64 = 0.99;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InvalidArgument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]) * (p[c] - q[c])))
        .sum();
    Ok(sum / (3 * a.pixels.len()).max(1) as f64)
}

/// Peak signal-to-noise ratio for unit data range; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// `inf` or the value with two decimals.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".into()
    } else {
        format!("{db:.2}")
    }
}

pub fn luminance(img: &Image) -> Vec<f64> {
    img.pixels.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect()
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let h = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - h;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM of the luminance channel over every fully contained 11×11
/// Gaussian-weighted window, unit data range.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let (x, y) = (luminance(a), luminance(b));
    let g = gaussian_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    // separable filtering: rows first, then columns over valid positions
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let fields = [
        x.clone(),
        y.clone(),
        x.iter().map(|v| v * v).collect::<Vec<_>>(),
        y.iter().map(|v| v * v).collect::<Vec<_>>(),
        x.iter().zip(&y).map(|(p, q)| p * q).collect::<Vec<_>>(),
    ];
    let filtered: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            let mut rows = vec![0.0; ow * h];
            for r in 0..h {
                for c in 0..ow {
                    rows[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * f[r * w + c + k]).sum();
                }
            }
            let mut out = vec![0.0; ow * oh];
            for r in 0..oh {
                for c in 0..ow {
                    out[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(r + k) * ow + c]).sum();
                }
            }
            out
        })
        .collect();
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let (mx, my) = (filtered[0][i], filtered[1][i]);
            let vx = filtered[2][i] - mx * mx;
            let vy = filtered[3][i] - my * my;
            let cxy = filtered[4][i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

/// Cumulative `Γ·α` per pixel after sorting contributions descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionCdf {
    /// Row-major; entry `r` is the sum of the `r + 1` largest contributions.
    pub per_pixel: Vec<Vec<f64>>,
    /// Number of splats binned to each pixel's tile.
    pub candidates: Vec<usize>,
    /// Mean over pixels of the cumulative curve, each curve held at its
    /// final value past its length.
    pub aggregate: Vec<f64>,
}

impl ContributionCdf {
    /// Smallest rank reaching `level` of the pixel's total contribution
    /// (0 for a pixel with no contributions).
    pub fn rank_for_coverage(&self, pixel: usize, level: f64) -> usize {
        let curve = &self.per_pixel[pixel];
        let Some(&total) = curve.last() else { return 0 };
        curve.iter().position(|&v| v >= level * total).map_or(curve.len(), |r| r + 1)
    }

    /// Mean over contributing pixels of `rank_for_coverage / candidates`.
    pub fn fraction_for_coverage(&self, level: f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, curve) in self.per_pixel.iter().enumerate() {
            if curve.is_empty() || self.candidates[i] == 0 {
                continue;
            }
            sum += self.rank_for_coverage(i, level) as f64 / self.candidates[i] as f64;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

pub fn contribution_cdf(
    gaussians: &[Gaussian3D],
    cam: &CameraPose,
    sh_degree: ShDegree,
    cfg: &RenderConfig,
) -> Result<ContributionCdf> {
    let cfg = RenderConfig {
        engine: Engine::Reference,
        ..*cfg
    };
    let frame = pipeline::prepare(gaussians, cam, sh_degree, &cfg)?;
    let (_, _, logs) = pipeline::rasterize_frame(&frame, &cfg, |_| ContributionLog::default())?;
    let grid = &frame.grid;
    let npix = (grid.width * grid.height) as usize;
    let mut per_pixel: Vec<Vec<f64>> = vec![Vec::new(); npix];
    let mut candidates = vec![0usize; npix];
    let mut tile_len = vec![0usize; grid.num_tiles() as usize];
    for r in &frame.ranges {
        tile_len[r.tile_id as usize] = r.end - r.start;
    }
    for (tile_id, log) in logs.into_iter().enumerate() {
        let [ox, oy] = grid.tile_origin(tile_id as u32);
        for y in oy..(oy + grid.tile_size).min(grid.height) {
            for x in ox..(ox + grid.tile_size).min(grid.width) {
                candidates[(y * grid.width + x) as usize] = tile_len[tile_id];
            }
        }
        for (l, _, w) in log.entries {
            let (x, y) = (ox + l % grid.tile_size, oy + l / grid.tile_size);
            per_pixel[(y * grid.width + x) as usize].push(w);
        }
    }
    let mut longest = 0;
    for curve in &mut per_pixel {
        curve.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        for v in curve.iter_mut() {
            acc += *v;
            *v = acc;
        }
        longest = longest.max(curve.len());
    }
    let mut aggregate = vec![0.0; longest];
    for curve in &per_pixel {
        for (r, a) in aggregate.iter_mut().enumerate() {
            *a += curve.get(r).or(curve.last()).copied().unwrap_or(0.0);
        }
    }
    for a in &mut aggregate {
        *a /= npix as f64;
    }
    Ok(ContributionCdf {
        per_pixel,
        candidates,
        aggregate,
    })
}
