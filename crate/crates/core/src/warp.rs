//! Forward (splatting) warp of a left view into the right view.

use crate::error::Result;
use crate::model::{validate_pair, DisparityMap, Frame, OcclusionMask};
use crate::par;

/// Z-buffer value of a target pixel that received no splat.
pub const NO_SPLAT: f32 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    /// Holes are black; consult `mask`, never the colour.
    pub warped: Frame,
    pub mask: OcclusionMask,
    /// Winning disparity per target pixel, or [`NO_SPLAT`].
    pub zbuffer: Vec<f32>,
}

/// Target column of source column `x` under disparity `d`, rounded half
/// away from zero.
#[inline]
pub fn target_column(x: usize, d: f32) -> i64 {
    (x as f64 - d as f64).round() as i64
}

/// Scatters every source pixel to `round(x - d)` in the same row.
///
/// Collisions go to the larger disparity; equal disparities keep the
/// smaller source column. Targets outside the frame are dropped.
pub fn forward_warp(frame: &Frame, disparity: &DisparityMap) -> Result<WarpResult> {
    validate_pair(frame, disparity)?;
    let (w, h) = frame.dims();
    let mut zbuffer = vec![NO_SPLAT; w * h];
    let mut colors = vec![0.0f32; 3 * w * h];

    // Rows are independent because the warp is horizontal only.
    let mut rows: Vec<(&mut [f32], &mut [f32])> = zbuffer
        .chunks_mut(w)
        .zip(colors.chunks_mut(3 * w))
        .collect();
    par::for_each_chunk_mut(&mut rows, 1, |y, chunk| {
        let (z, c) = &mut chunk[0];
        let src = frame.row(y);
        let d = disparity.row(y);
        for x in 0..w {
            let t = target_column(x, d[x]);
            if t < 0 || t >= w as i64 {
                continue;
            }
            let t = t as usize;
            // Strict `>` keeps the earliest (smallest x) source on ties.
            if d[x] > z[t] {
                z[t] = d[x];
                c[3 * t..3 * t + 3].copy_from_slice(&src[3 * x..3 * x + 3]);
            }
        }
    });
    drop(rows);

    let bits = zbuffer.iter().map(|&z| z == NO_SPLAT).collect();
    Ok(WarpResult {
        warped: Frame::from_raw_unchecked(w, h, colors),
        mask: OcclusionMask::new(w, h, bits)?,
        zbuffer,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleStats {
    pub count: usize,
    /// Longest run of consecutive holes in each row.
    pub largest_run_per_row: Vec<usize>,
}

impl HoleStats {
    pub fn largest_run(&self) -> usize {
        self.largest_run_per_row.iter().copied().max().unwrap_or(0)
    }
}

pub fn hole_stats(mask: &OcclusionMask) -> HoleStats {
    let mut count = 0;
    let mut largest_run_per_row = Vec::with_capacity(mask.height());
    for y in 0..mask.height() {
        let (mut run, mut best) = (0usize, 0usize);
        for &b in mask.row(y) {
            if b {
                count += 1;
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        largest_run_per_row.push(best);
    }
    HoleStats {
        count,
        largest_run_per_row,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f32; 3] = [0.1, 0.0, 0.0];
    const B: [f32; 3] = [0.2, 0.0, 0.0];
    const C: [f32; 3] = [0.3, 0.0, 0.0];
    const D: [f32; 3] = [0.4, 0.0, 0.0];

    fn row(px: &[[f32; 3]]) -> Frame {
        Frame::new(px.len(), 1, px.concat()).unwrap()
    }

    #[test]
    fn zero_disparity_is_identity() {
        let f = Frame::from_fn(5, 3, |x, y| [x as f32 / 5.0, y as f32 / 3.0, 0.5]).unwrap();
        let r = forward_warp(&f, &DisparityMap::zeros(5, 3).unwrap()).unwrap();
        assert_eq!(r.warped, f);
        assert!(r.mask.is_empty());
    }

    #[test]
    fn leftmost_source_drops_off_the_frame() {
        let f = row(&[A, B, C, D]);
        let d = DisparityMap::new(4, 1, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let r = forward_warp(&f, &d).unwrap();
        assert_eq!(r.mask.bits(), &[false, true, false, false]);
        assert_eq!(r.warped.pixel(0, 0), B);
        assert_eq!(r.warped.pixel(1, 0), [0.0; 3]);
        assert_eq!(r.warped.pixel(2, 0), C);
        assert_eq!(r.warped.pixel(3, 0), D);
        assert_eq!(r.zbuffer, vec![1.0, NO_SPLAT, 0.0, 0.0]);
    }

    #[test]
    fn nearer_surface_wins_collisions() {
        // A->0 (d0), B->1 (d0), C->0 (d2), D->1 (d2): C and D occlude.
        let f = row(&[A, B, C, D]);
        let d = DisparityMap::new(4, 1, vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        let r = forward_warp(&f, &d).unwrap();
        assert_eq!(r.warped.pixel(0, 0), C);
        assert_eq!(r.warped.pixel(1, 0), D);
        assert_eq!(r.mask.bits(), &[false, false, true, true]);
    }

    #[test]
    fn rounding_collision_goes_to_larger_disparity() {
        // x=1 (d=0.6) rounds onto target 0 where x=0 (d=0) also lands.
        let f = row(&[A, B, C]);
        let d = DisparityMap::new(3, 1, vec![0.0, 0.6, 0.6]).unwrap();
        let r = forward_warp(&f, &d).unwrap();
        assert_eq!(r.warped.pixel(0, 0), B);
        assert_eq!(r.warped.pixel(1, 0), C);
        assert!(r.mask.get(2, 0));
    }

    #[test]
    fn half_pixel_rounds_away_from_zero() {
        assert_eq!(target_column(3, 0.5), 3);
        assert_eq!(target_column(3, 1.5), 2);
        assert_eq!(target_column(0, 0.5), -1);
    }

    #[test]
    fn hole_stats_counts_runs() {
        let m = OcclusionMask::new(4, 1, vec![false, true, true, false]).unwrap();
        let s = hole_stats(&m);
        assert_eq!(s.count, 2);
        assert_eq!(s.largest_run(), 2);
        assert_eq!(hole_stats(&OcclusionMask::empty(3, 2).unwrap()).count, 0);
    }

    #[test]
    fn hole_stats_matches_naive_count() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(3);
        let bits: Vec<bool> = (0..64 * 64).map(|_| rng.gen_bool(0.3)).collect();
        let m = OcclusionMask::new(64, 64, bits.clone()).unwrap();
        let mut naive = 0;
        for y in 0..64 {
            for x in 0..64 {
                if bits[y * 64 + x] {
                    naive += 1;
                }
            }
        }
        assert_eq!(hole_stats(&m).count, naive);
    }
}
