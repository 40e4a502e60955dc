//! Rendered images and per-frame counters.

use serde::{Deserialize, Serialize};

use crate::raster::WarpCost;

/// Linear RGB float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = rgb;
    }
}

/// Counters collected while rendering one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame: u64,
    pub gaussians_in: u64,
    pub culled: u64,
    /// Dropped for a near-singular screen-space covariance.
    pub degenerate: u64,
    pub tile_pairs: u64,
    /// Per-pixel α evaluations (leader evaluations included).
    pub pixel_alpha_evals: u64,
    pub pixel_blends: u64,
    pub warp: WarpCost,
    pub resident_bytes: u64,
    pub stalls: u64,
    pub prefetch_hits: u64,
}

impl FrameStats {
    pub fn accumulate(&mut self, other: &FrameStats) {
        self.gaussians_in += other.gaussians_in;
        self.culled += other.culled;
        self.degenerate += other.degenerate;
        self.tile_pairs += other.tile_pairs;
        self.pixel_alpha_evals += other.pixel_alpha_evals;
        self.pixel_blends += other.pixel_blends;
        self.warp.add(&other.warp);
        self.stalls += other.stalls;
        self.prefetch_hits += other.prefetch_hits;
        self.resident_bytes = self.resident_bytes.max(other.resident_bytes);
    }
}
