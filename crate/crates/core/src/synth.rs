//! Seeded synthetic scenes and camera paths for tests, demos and benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::scene::{CameraPose, Gaussian3D, SH_COEFFS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSceneOptions {
    pub count: usize,
    /// Include view-dependent SH terms up to this degree.
    pub sh_degree: u32,
    /// Fraction of splats with opacity below 0.012 (faint tails).
    pub faint_fraction: f64,
}

impl Default for RandomSceneOptions {
    fn default() -> Self {
        Self {
            count: 48,
            sh_degree: 3,
            faint_fraction: 0.15,
        }
    }
}

/// Camera at the origin looking down +z.
pub fn front_camera(width: u32, height: u32) -> CameraPose {
    CameraPose::look_at([0.0; 3], [0.0, 0.0, 1.0], 60f64.to_radians(), width, height).expect("valid camera")
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [f32; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = math::quat_norm(q);
        if n > 0.1 && n <= 1.0 {
            return math::quat_normalize(q).map(|v| v as f32);
        }
    }
}

/// Anisotropic splats spread through the view of [`front_camera`].
pub fn random_scene(seed: u64, opts: &RandomSceneOptions) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rest = match opts.sh_degree {
        0 => 0,
        d => ((d + 1) * (d + 1) - 1) as usize,
    };
    (0..opts.count)
        .map(|_| {
            let z: f64 = rng.random_range(2.0..6.0);
            let position = [
                (rng.random_range(-0.6..0.6) * z) as f32,
                (rng.random_range(-0.6..0.6) * z) as f32,
                z as f32,
            ];
            let log_scale: [f32; 3] = std::array::from_fn(|_| rng.random_range(-3.5f32..-1.2));
            let opacity: f64 = if rng.random::<f64>() < opts.faint_fraction {
                rng.random_range(0.002..0.012)
            } else {
                rng.random_range(0.05..0.999)
            };
            let mut sh = [[0f32; SH_COEFFS]; 3];
            for channel in &mut sh {
                channel[0] = rng.random_range(-1.5..1.5);
                for v in channel.iter_mut().skip(1).take(rest) {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
            Gaussian3D::new(position, log_scale, random_rotation(&mut rng), math::logit(opacity) as f32, sh)
                .expect("generated values are finite")
        })
        .collect()
}

/// Layout of [`two_sided_scene`]: ids of each population.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedScene {
    pub gaussians: Vec<Gaussian3D>,
    pub core: Vec<u32>,
    pub front: Vec<u32>,
    pub back: Vec<u32>,
    /// Cameras on the `z < 0` side looking towards +z, then the mirrored arc.
    pub front_arc: Vec<CameraPose>,
    pub back_arc: Vec<CameraPose>,
}

impl TwoSidedScene {
    pub fn poses(&self) -> Vec<CameraPose> {
        self.front_arc.iter().chain(&self.back_arc).copied().collect()
    }
}

/// A small common core at the origin plus two populations, one near
/// `z = +5` and one near `z = -5`. Each camera arc sits between the core
/// and one population's opposite side, so every population except the core
/// lies behind one of the arcs.
pub fn two_sided_scene(seed: u64, per_side: usize, core: usize, width: u32, height: u32) -> TwoSidedScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussians = Vec::new();
    let mut blob = |rng: &mut ChaCha8Rng, center: [f64; 3], spread: f64, n: usize| -> Vec<u32> {
        (0..n)
            .map(|_| {
                let p: [f32; 3] = std::array::from_fn(|i| (center[i] + rng.random_range(-spread..spread)) as f32);
                let rgb: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
                let sigma = rng.random_range(0.08..0.25);
                let o = rng.random_range(0.3..0.9);
                gaussians.push(Gaussian3D::isotropic(p, sigma, o, rgb));
                (gaussians.len() - 1) as u32
            })
            .collect()
    };
    let core_ids = blob(&mut rng, [0.0; 3], 0.3, core);
    let front_ids = blob(&mut rng, [0.0, 0.0, 5.0], 1.2, per_side);
    let back_ids = blob(&mut rng, [0.0, 0.0, -5.0], 1.2, per_side);

    let arc = |z: f64, look: f64| -> Vec<CameraPose> {
        (0..5)
            .map(|i| {
                let x = -0.5 + 0.25 * i as f64;
                CameraPose::look_at([x, 0.0, z], [x, 0.0, z + look], 70f64.to_radians(), width, height)
                    .expect("valid camera")
            })
            .collect()
    };
    TwoSidedScene {
        gaussians,
        core: core_ids,
        front: front_ids,
        back: back_ids,
        front_arc: arc(-2.0, 1.0),
        back_arc: arc(2.0, -1.0),
    }
}

/// Splats spread along a wide slab with training cameras on a line in front
/// of it, all looking down +z.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub gaussians: Vec<Gaussian3D>,
    pub training: Vec<CameraPose>,
}

pub fn corridor_scene(seed: u64, count: usize, width: u32, height: u32) -> Corridor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..count)
        .map(|_| {
            let p = [
                rng.random_range(-6.0f32..6.0),
                rng.random_range(-1.5f32..1.5),
                rng.random_range(2.0f32..6.0),
            ];
            let rgb: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.95));
            Gaussian3D::isotropic(p, rng.random_range(0.1..0.35), rng.random_range(0.2..0.95), rgb)
        })
        .collect();
    let start = CameraPose::look_at([-4.0, 0.0, 0.0], [-4.0, 0.0, 1.0], 60f64.to_radians(), width, height)
        .expect("valid camera");
    Corridor {
        gaussians,
        training: linear_pan(&start, [8.0 / 15.0, 0.0, 0.0], 16),
    }
}

/// `frames` poses moving by `step` per frame from `start`, fixed orientation.
pub fn linear_pan(start: &CameraPose, step: [f64; 3], frames: usize) -> Vec<CameraPose> {
    (0..frames)
        .map(|i| {
            let mut p = *start;
            p.position = math::add(start.position, math::scale(step, i as f64));
            p
        })
        .collect()
}
