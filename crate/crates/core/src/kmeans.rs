//! Lloyd's k-means with k-means++ seeding over fixed-size feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 100;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

pub fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the smaller index.
pub fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<const D: usize> {
    pub centroids: Vec<[f64; D]>,
    /// Nearest-centroid assignment with respect to `centroids`.
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn plus_plus_init<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Deterministic for a given seed. Panics if `k == 0` or `k > points.len()`.
pub fn kmeans<const D: usize>(points: &[[f64; D]], k: usize, seed: u64) -> KMeans<D> {
    assert!(k >= 1 && k <= points.len(), "k must lie in 1..=points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![0; points.len()];
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids);
        }
        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for d in 0..D {
                sums[a][d] += p[d];
            }
        }
        let mut updated = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                updated[c] = sums[c].map(|s| s / counts[c] as f64);
            } else {
                // reseed an empty cluster at the worst-served point
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &updated[assignment[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                updated[c] = points[far];
                assignment[far] = c;
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let scale = updated
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(1.0, f64::max);
        centroids = updated;
        if shift <= RELATIVE_TOLERANCE * scale {
            break;
        }
    }
    for (a, p) in assignment.iter_mut().zip(points) {
        *a = nearest(p, &centroids);
    }
    KMeans {
        centroids,
        assignment,
        iterations,
    }
}
