//! Independent reference implementations used as test oracles. They favor
//! obviousness over speed and share no code paths with the engines beyond
//! the per-splat projection.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use seele::frame::Image;
use seele::preprocess::{self, ProjectOptions};
use seele::scene::{CameraPose, Gaussian3D, ProjectedGaussian, ShDegree};

pub const ALPHA_THETA: f64 = 1.0 / 255.0;
pub const GAMMA_THETA: f64 = 1e-4;

/// Per-pixel compositing record from [`brute_render`].
#[derive(Debug, Clone, Default)]
pub struct PixelTrace {
    /// `(source index, Γ·α)` in blend order.
    pub blends: Vec<(u32, f64)>,
    pub final_gamma: f64,
}

fn mahalanobis(pg: &ProjectedGaussian, x: f64, y: f64) -> f64 {
    let dx = x - pg.mean2d[0];
    let dy = y - pg.mean2d[1];
    let [a, b, c] = pg.inv_cov2d;
    dx * (a * dx + b * dy) + dy * (b * dx + c * dy)
}

/// Untiled renderer: every splat is tested against every pixel, in one
/// global front-to-back order by (depth, index).
pub fn brute_render(
    gaussians: &[Gaussian3D],
    cam: &CameraPose,
    sh: ShDegree,
    background: [f64; 3],
) -> (Image, Vec<PixelTrace>) {
    let opts = ProjectOptions {
        sh_degree: sh,
        ..ProjectOptions::default()
    };
    let mut visible: Vec<(f32, u32, ProjectedGaussian)> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| preprocess::project(g, cam, &opts).ok().map(|p| (p.depth, i as u32, p)))
        .collect();
    visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut img = Image::filled(cam.width, cam.height, [0.0; 3]);
    let mut traces = Vec::with_capacity((cam.width * cam.height) as usize);
    for py in 0..cam.height {
        for px in 0..cam.width {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut gamma = 1.0;
            let mut color = [0.0; 3];
            let mut trace = PixelTrace::default();
            for (_, idx, pg) in &visible {
                let m = mahalanobis(pg, x, y);
                if m > 9.0 {
                    continue;
                }
                let a = (pg.opacity * (-0.5 * m).exp()).min(0.99);
                if a < ALPHA_THETA {
                    continue;
                }
                for c in 0..3 {
                    color[c] += gamma * a * pg.color[c];
                }
                trace.blends.push((*idx, gamma * a));
                gamma *= 1.0 - a;
                if gamma < GAMMA_THETA {
                    break;
                }
            }
            for c in 0..3 {
                color[c] += gamma * background[c];
            }
            trace.final_gamma = gamma;
            img.set(px, py, color);
            traces.push(trace);
        }
    }
    (img, traces)
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

// --- spherical harmonics from associated Legendre polynomials ---

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// P_l^m(x) with the Condon-Shortley phase, m ≥ 0.
fn legendre(l: u32, m: u32, x: f64) -> f64 {
    let mut pmm = 1.0;
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * s;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmm1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = ((2 * ll - 1) as f64 * x * pmm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmm1;
        pmm1 = pll;
    }
    pll
}

/// Real SH `Y_l^m` at unit direction `d`, indexed like the color
/// coefficients (`l² + l + m`).
pub fn real_sh(l: u32, m: i32, d: [f64; 3]) -> f64 {
    let theta = d[2].clamp(-1.0, 1.0).acos();
    let phi = d[1].atan2(d[0]);
    let am = m.unsigned_abs();
    let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let p = legendre(l, am, theta.cos());
    match m {
        0 => k * p,
        m if m > 0 => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).sin(),
    }
}

pub fn sh_color_oracle(sh: &[[f32; 16]; 3], d: [f64; 3], degree: u32) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, coeffs) in sh.iter().enumerate() {
        let mut sum = 0.0;
        for l in 0..=degree {
            for m in -(l as i32)..=(l as i32) {
                let idx = (l * l) as i32 + l as i32 + m;
                sum += f64::from(coeffs[idx as usize]) * real_sh(l, m, d);
            }
        }
        out[c] = (sum + 0.5).max(0.0);
    }
    out
}

// --- binning, sorting ---

/// Tiles whose pixel rectangle overlaps the open box `mean ± half`.
pub fn brute_tiles(pg: &ProjectedGaussian, width: u32, height: u32, tile: u32) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    if pg.radius_sq_cutoff <= 0.0 {
        return out;
    }
    let hx = (pg.radius_sq_cutoff * pg.cov2d[0]).sqrt();
    let hy = (pg.radius_sq_cutoff * pg.cov2d[2]).sqrt();
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let x0 = (tx * tile) as f64;
            let x1 = (((tx + 1) * tile).min(width)) as f64;
            let y0 = (ty * tile) as f64;
            let y1 = (((ty + 1) * tile).min(height)) as f64;
            let overlap_x = pg.mean2d[0] - hx < x1 && pg.mean2d[0] + hx > x0;
            let overlap_y = pg.mean2d[1] - hy < y1 && pg.mean2d[1] + hy > y0;
            if overlap_x && overlap_y {
                out.insert(ty * tiles_x + tx);
            }
        }
    }
    out
}

// --- clustering ---

/// Optimal 2-means labels by exhaustive search over bipartitions.
pub fn brute_two_means(points: &[[f64; 6]]) -> Vec<usize> {
    let n = points.len();
    assert!(n <= 16);
    let cost = |mask: u32| -> f64 {
        let mut total = 0.0;
        for side in [true, false] {
            let members: Vec<&[f64; 6]> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| &points[i]).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = [0.0; 6];
            for p in &members {
                for d in 0..6 {
                    mean[d] += p[d] / members.len() as f64;
                }
            }
            for p in &members {
                total += (0..6).map(|d| (p[d] - mean[d]).powi(2)).sum::<f64>();
            }
        }
        total
    };
    let best = (1..(1u32 << n) - 1).min_by(|a, b| cost(*a).total_cmp(&cost(*b))).unwrap();
    (0..n).map(|i| ((best >> i) & 1) as usize).collect()
}

/// Labels equal up to renaming.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Shared / exclusive / discarded by counting memberships directly.
pub fn membership_partition(
    sets: &[BTreeSet<u32>],
    total: usize,
    threshold: usize,
) -> (Vec<u32>, Vec<Vec<u32>>, Vec<u32>) {
    let mut shared = Vec::new();
    let mut exclusive = vec![Vec::new(); sets.len()];
    let mut discarded = Vec::new();
    for id in 0..total as u32 {
        let holders: Vec<usize> = (0..sets.len()).filter(|&c| sets[c].contains(&id)).collect();
        match holders.len() {
            0 => discarded.push(id),
            1 if threshold > 1 => exclusive[holders[0]].push(id),
            _ => shared.push(id),
        }
    }
    (shared, exclusive, discarded)
}

/// Top-k union over all pixels of all poses, by fully sorting each pixel's
/// brute-force contribution list.
pub fn brute_harvest(gaussians: &[Gaussian3D], poses: &[CameraPose], sh: ShDegree, k: usize) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for cam in poses {
        let (_, traces) = brute_render(gaussians, cam, sh, [0.0; 3]);
        for t in traces {
            let mut list = t.blends.clone();
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            out.extend(list.iter().take(k).map(|e| e.0));
        }
    }
    out
}

// --- metrics ---

pub fn psnr_oracle(a: &Image, b: &Image) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for c in 0..3 {
        for (p, q) in a.pixels.iter().zip(&b.pixels) {
            sum += (p[c] - q[c]).powi(2);
            n += 1;
        }
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Direct 2D-window SSIM on BT.601 luminance.
pub fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let lum = |img: &Image| -> Vec<f64> {
        img.pixels.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect()
    };
    let (x, y) = (lum(a), lum(b));
    let (w, h) = (a.width as usize, a.height as usize);
    let mut win = [[0.0; 11]; 11];
    let mut s = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            s += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wgt = win[i][j] / s;
                    let idx = (oy + i) * w + ox + j;
                    mx += wgt * x[idx];
                    my += wgt * y[idx];
                    sxx += wgt * x[idx] * x[idx];
                    syy += wgt * y[idx] * y[idx];
                    sxy += wgt * x[idx] * y[idx];
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

// --- fixtures ---

pub fn write_scene(dir: &Path, name: &str, gaussians: &[Gaussian3D], sh: ShDegree) -> std::path::PathBuf {
    let p = dir.join(name);
    seele::io::write_ply(&p, gaussians, sh).unwrap();
    p
}

pub fn write_cams(dir: &Path, name: &str, cams: &[CameraPose]) -> std::path::PathBuf {
    let p = dir.join(name);
    seele::io::write_cameras(&p, cams).unwrap();
    p
}
