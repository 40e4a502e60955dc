//! Front-to-back ordering of tile intersections.
//!
//! Entries are keyed by `tile_id << 32 | depth_bits` with the gaussian
//! reference as a tie-break, and ordered with an LSD radix sort so the
//! result depends only on the input multiset.

use crate::preprocess::TileIntersection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortedTileRange {
    pub tile_id: u32,
    pub start: usize,
    pub end: usize,
}

/// Composite key. Depths are positive, so their IEEE bits order like the values.
pub fn sort_key(e: &TileIntersection) -> u64 {
    debug_assert!(e.depth >= 0.0);
    (u64::from(e.tile_id) << 32) | u64::from(e.depth.to_bits())
}

fn radix_pass<T: Copy>(src: &[T], dst: &mut [T], digit: impl Fn(&T) -> usize) {
    let mut counts = [0usize; 256];
    for v in src {
        counts[digit(v)] += 1;
    }
    let mut offset = 0;
    for c in counts.iter_mut() {
        let n = *c;
        *c = offset;
        offset += n;
    }
    for v in src {
        let d = digit(v);
        dst[counts[d]] = *v;
        counts[d] += 1;
    }
}

/// Sorts by (tile, depth, gaussian_ref) and returns the per-tile ranges of
/// the sorted array, ascending by tile.
pub fn sort_intersections(entries: Vec<TileIntersection>) -> (Vec<TileIntersection>, Vec<SortedTileRange>) {
    let mut keyed: Vec<(u64, u32, TileIntersection)> =
        entries.into_iter().map(|e| (sort_key(&e), e.gaussian_ref, e)).collect();
    let mut scratch = keyed.clone();

    let max_key = keyed.iter().map(|k| k.0).max().unwrap_or(0);
    let max_ref = keyed.iter().map(|k| k.1).max().unwrap_or(0);
    let bytes_needed = |m: u64| ((64 - m.leading_zeros() as usize) + 7) / 8;

    // least significant first: tie-break, then the composite key
    for b in 0..bytes_needed(u64::from(max_ref)) {
        radix_pass(&keyed, &mut scratch, |k| ((k.1 >> (8 * b)) & 0xff) as usize);
        std::mem::swap(&mut keyed, &mut scratch);
    }
    for b in 0..bytes_needed(max_key) {
        radix_pass(&keyed, &mut scratch, |k| ((k.0 >> (8 * b)) & 0xff) as usize);
        std::mem::swap(&mut keyed, &mut scratch);
    }

    let sorted: Vec<TileIntersection> = keyed.into_iter().map(|k| k.2).collect();
    let mut ranges: Vec<SortedTileRange> = Vec::new();
    for (i, e) in sorted.iter().enumerate() {
        match ranges.last_mut() {
            Some(r) if r.tile_id == e.tile_id => r.end = i + 1,
            _ => ranges.push(SortedTileRange {
                tile_id: e.tile_id,
                start: i,
                end: i + 1,
            }),
        }
    }
    (sorted, ranges)
}
