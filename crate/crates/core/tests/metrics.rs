mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seele::frame::Image;
use seele::metrics;
use seele::pipeline::RenderConfig;
use seele::scene::ShDegree;
use seele::synth::{self, RandomSceneOptions};

fn noisy(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Image {
    let mut img = Image::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let base = (x as f64 / w as f64 + y as f64 / h as f64) * 0.5;
            img.set(x, y, std::array::from_fn(|_| (base + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)));
        }
    }
    img
}

#[test]
fn psnr_and_ssim_match_direct_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (w, h) in [(11, 11), (16, 13), (40, 25)] {
        let a = noisy(&mut rng, w, h);
        let b = noisy(&mut rng, w, h);
        let p = metrics::psnr(&a, &b).unwrap();
        assert!((p - common::psnr_oracle(&a, &b)).abs() < 1e-9);
        let s = metrics::ssim(&a, &b).unwrap();
        assert!((s - common::ssim_oracle(&a, &b)).abs() < 1e-9, "{w}x{h}: {s} vs {}", common::ssim_oracle(&a, &b));
        assert!((s - metrics::ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn identical_images_are_perfect() {
    let a = noisy(&mut ChaCha8Rng::seed_from_u64(2), 20, 20);
    assert_eq!(metrics::psnr(&a, &a).unwrap(), f64::INFINITY);
    assert_eq!(metrics::format_psnr(f64::INFINITY), "inf");
    assert!((metrics::ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn known_psnr_values() {
    let a = Image::filled(4, 4, [0.0; 3]);
    let b = Image::filled(4, 4, [0.1; 3]);
    assert!((metrics::psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(metrics::format_psnr(20.0), "20.00");
}

#[test]
fn metrics_reject_mismatched_or_tiny_images() {
    let a = Image::filled(12, 12, [0.0; 3]);
    assert!(metrics::psnr(&a, &Image::filled(12, 11, [0.0; 3])).is_err());
    let tiny = Image::filled(10, 10, [0.0; 3]);
    assert!(metrics::ssim(&tiny, &tiny).is_err());
}

#[test]
fn contribution_curves_sum_to_opacity_of_each_pixel() {
    let scene = synth::random_scene(3, &RandomSceneOptions { count: 120, ..Default::default() });
    let cam = synth::front_camera(48, 48);
    let cdf = metrics::contribution_cdf(&scene, &cam, ShDegree::MAX, &RenderConfig::default()).unwrap();
    let (_, traces) = common::brute_render(&scene, &cam, ShDegree::MAX, [0.0; 3]);
    for (i, (curve, trace)) in cdf.per_pixel.iter().zip(&traces).enumerate() {
        assert_eq!(curve.len(), trace.blends.len(), "pixel {i}");
        let total = curve.last().copied().unwrap_or(0.0);
        assert!((total + trace.final_gamma - 1.0).abs() < 1e-9);
        let mut weights: Vec<f64> = trace.blends.iter().map(|b| b.1).collect();
        weights.sort_by(|a, b| b.total_cmp(a));
        assert!(weights.is_empty() || (curve[0] - weights[0]).abs() < 1e-12);
        let r = cdf.rank_for_coverage(i, 0.99);
        assert!(r <= curve.len());
        if r > 0 {
            assert!(curve[r - 1] >= 0.99 * total);
            assert!(r == 1 || curve[r - 2] < 0.99 * total);
        }
        assert!(cdf.candidates[i] >= curve.len());
    }
    let f = cdf.fraction_for_coverage(0.99);
    assert!(f > 0.0 && f <= 1.0);
}
