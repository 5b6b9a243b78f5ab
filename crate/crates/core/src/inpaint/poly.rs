//! Row-as-polyline view synthesis.
//!
//! Each row is a polyline of samples `(x - d(x), colour(x))`. Forward-going
//! segments are rasterized onto integer target columns with linear colour
//! and depth interpolation, so disocclusions are bridged by stretching the
//! neighbouring surfaces. Segments that run backwards belong to folds and
//! are hidden. Where segments overlap, the larger interpolated disparity
//! wins; on equal disparity the earlier segment stays.

use crate::error::Result;
use crate::model::{validate_pair, DisparityMap, Frame};
use crate::par;

/// Rasterizes one row. `colors` is interleaved RGB, `disp` one value per
/// column. Returns interleaved RGB of the same width.
pub fn rasterize_row(colors: &[f32], disp: &[f32]) -> Vec<f32> {
    let w = disp.len();
    let pos: Vec<f64> = disp
        .iter()
        .enumerate()
        .map(|(x, &d)| x as f64 - d as f64)
        .collect();
    let mut depth = vec![f64::NEG_INFINITY; w];
    let mut out = vec![0.0f32; 3 * w];

    let mut splat = |c: usize, s: f64, a: usize, b: usize, depth_ab: f64| {
        if depth_ab > depth[c] {
            depth[c] = depth_ab;
            for ch in 0..3 {
                let v = (1.0 - s) * colors[3 * a + ch] as f64 + s * colors[3 * b + ch] as f64;
                out[3 * c + ch] = (v as f32).clamp(0.0, 1.0);
            }
        }
    };

    if w == 1
        && pos[0] == 0.0 {
            splat(0, 0.0, 0, 0, disp[0] as f64);
        }
    for a in 0..w.saturating_sub(1) {
        let b = a + 1;
        let (t0, t1) = (pos[a], pos[b]);
        if t1 < t0 {
            continue;
        }
        let lo = t0.ceil().max(0.0);
        let hi = t1.floor().min(w as f64 - 1.0);
        if lo > hi {
            continue;
        }
        let (d0, d1) = (disp[a] as f64, disp[b] as f64);
        for c in lo as usize..=hi as usize {
            let s = if t1 > t0 { (c as f64 - t0) / (t1 - t0) } else { 0.0 };
            splat(c, s, a, b, (1.0 - s) * d0 + s * d1);
        }
    }

    let covered: Vec<usize> = (0..w).filter(|&c| depth[c] > f64::NEG_INFINITY).collect();
    if covered.is_empty() {
        return colors.to_vec();
    }
    // Clamp uncovered columns to the nearest covered one (ties go right).
    for c in 0..w {
        if depth[c] > f64::NEG_INFINITY {
            continue;
        }
        let k = covered.partition_point(|&v| v < c);
        let src = match (k.checked_sub(1).map(|i| covered[i]), covered.get(k)) {
            (Some(l), Some(&r)) => {
                if c - l < r - c {
                    l
                } else {
                    r
                }
            }
            (Some(l), None) => l,
            (None, Some(&r)) => r,
            (None, None) => unreachable!(),
        };
        out.copy_within(3 * src..3 * src + 3, 3 * c);
    }
    out
}

/// Synthesizes a complete right view by rasterizing every row as a
/// disparity-morphed polyline.
pub fn inpaint_poly(frame: &Frame, disparity: &DisparityMap) -> Result<Frame> {
    validate_pair(frame, disparity)?;
    let (w, h) = frame.dims();
    let rows = par::map_range(h, |y| rasterize_row(frame.row(y), disparity.row(y)));
    Ok(Frame::from_raw_unchecked(w, h, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_disparity_is_identity() {
        let f = Frame::from_fn(7, 3, |x, y| [x as f32 / 7.0, 0.3, y as f32 / 3.0]).unwrap();
        let out = inpaint_poly(&f, &DisparityMap::zeros(7, 3).unwrap()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn disocclusion_is_bridged_linearly() {
        // Samples land at -2, -1, 2, 3, 4; the (-1 -> 2) segment spans 0, 1, 2.
        let (a, b) = ([1.0f32; 3], [0.0f32; 3]);
        let colors = [a, a, b, b, b].concat();
        let out = rasterize_row(&colors, &[2.0, 2.0, 0.0, 0.0, 0.0]);
        let expect = [2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0];
        for (x, e) in expect.iter().enumerate() {
            assert!((out[3 * x] - e).abs() < 1e-6, "x={x}: {} vs {e}", out[3 * x]);
        }
    }

    #[test]
    fn fold_keeps_the_nearer_surface() {
        // Background B B, foreground A A with d=2 folds back over it.
        let (a, b) = ([0.9f32, 0.1, 0.1], [0.1f32, 0.1, 0.9]);
        let colors = [b, b, a, a].concat();
        let out = rasterize_row(&colors, &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(&out[0..3], &a);
        assert_eq!(&out[3..6], &a);
        // Columns 2, 3 are uncovered and clamp to column 1.
        assert_eq!(&out[6..9], &a);
        assert_eq!(&out[9..12], &a);
    }

    #[test]
    fn single_column_rows() {
        let out = rasterize_row(&[0.2, 0.4, 0.6], &[0.0]);
        assert_eq!(out, vec![0.2, 0.4, 0.6]);
        let out = rasterize_row(&[0.2, 0.4, 0.6], &[1.0]);
        assert_eq!(out, vec![0.2, 0.4, 0.6]);
    }
}
