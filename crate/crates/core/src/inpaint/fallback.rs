//! Deterministic diffusion fill, used when no learned inpainter output is
//! available.

use crate::error::{check_dims, Result};
use crate::model::{Frame, OcclusionMask};
use crate::par;

pub const DEFAULT_TOLERANCE: f32 = 1e-4;
pub const DEFAULT_MAX_SWEEPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionStats {
    pub sweeps: usize,
    pub max_change: f32,
    pub converged: bool,
}

/// Row-wise linear interpolation between the nearest known pixels, used as
/// the starting point of the diffusion. Reads known pixels only.
fn initial_guess(warped: &Frame, mask: &OcclusionMask) -> Vec<f32> {
    let (w, h) = warped.dims();
    let mut out = warped.data().to_vec();
    let known: Vec<usize> = (0..w * h).filter(|&i| !mask.bits()[i]).collect();
    let mut mean = [0.5f64; 3];
    if !known.is_empty() {
        for (ch, m) in mean.iter_mut().enumerate() {
            *m = known
                .iter()
                .map(|&i| warped.data()[3 * i + ch] as f64)
                .sum::<f64>()
                / known.len() as f64;
        }
    }
    for y in 0..h {
        let holes = mask.row(y);
        let src = warped.row(y);
        let row = &mut out[3 * w * y..3 * w * (y + 1)];
        let mut x = 0;
        while x < w {
            if !holes[x] {
                x += 1;
                continue;
            }
            let start = x;
            while x < w && holes[x] {
                x += 1;
            }
            let left = start.checked_sub(1);
            let right = (x < w).then_some(x);
            for (i, t) in (start..x).enumerate() {
                for ch in 0..3 {
                    row[3 * t + ch] = match (left, right) {
                        (Some(l), Some(r)) => {
                            let s = (i + 1) as f32 / (r - l) as f32;
                            (1.0 - s) * src[3 * l + ch] + s * src[3 * r + ch]
                        }
                        (Some(l), None) => src[3 * l + ch],
                        (None, Some(r)) => src[3 * r + ch],
                        (None, None) => mean[ch] as f32,
                    };
                }
            }
        }
    }
    out
}

/// Fills holes by synchronous Jacobi sweeps of 4-neighbour averaging until
/// the largest per-sweep change drops below `tolerance`. Known pixels are
/// never modified.
pub fn diffusion_fill(
    warped: &Frame,
    mask: &OcclusionMask,
    tolerance: f32,
    max_sweeps: usize,
) -> Result<(Frame, DiffusionStats)> {
    check_dims(warped.dims(), mask.dims())?;
    let (w, h) = warped.dims();
    let holes: Vec<usize> = (0..w * h).filter(|&i| mask.bits()[i]).collect();
    let mut stats = DiffusionStats {
        sweeps: 0,
        max_change: 0.0,
        converged: true,
    };
    if holes.is_empty() {
        return Ok((warped.clone(), stats));
    }
    let mut current = initial_guess(warped, mask);

    let chunk = holes.len().div_ceil(64).max(256);
    let blocks: Vec<&[usize]> = holes.chunks(chunk).collect();
    loop {
        let updates: Vec<Vec<[f32; 3]>> = par::map_slice(&blocks, |block| {
            block
                .iter()
                .map(|&i| {
                    let (x, y) = (i % w, i / w);
                    let mut acc = [0.0f32; 3];
                    let mut n = 0.0f32;
                    let mut add = |j: usize| {
                        for ch in 0..3 {
                            acc[ch] += current[3 * j + ch];
                        }
                        n += 1.0;
                    };
                    if x > 0 {
                        add(i - 1);
                    }
                    if x + 1 < w {
                        add(i + 1);
                    }
                    if y > 0 {
                        add(i - w);
                    }
                    if y + 1 < h {
                        add(i + w);
                    }
                    acc.map(|v| v / n)
                })
                .collect()
        });
        let mut max_change = 0.0f32;
        for (&i, v) in holes.iter().zip(updates.iter().flatten()) {
            for ch in 0..3 {
                let old = current[3 * i + ch];
                max_change = max_change.max((v[ch] - old).abs());
                current[3 * i + ch] = v[ch];
            }
        }
        stats.sweeps += 1;
        stats.max_change = max_change;
        if max_change < tolerance {
            break;
        }
        if stats.sweeps >= max_sweeps {
            stats.converged = false;
            log::warn!(
                "diffusion fill stopped after {} sweeps (max change {max_change})",
                stats.sweeps
            );
            break;
        }
    }
    current.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok((Frame::from_raw_unchecked(w, h, current), stats))
}

/// Diffusion fill with the default tolerance of 1e-4.
pub fn inpaint_fallback(warped: &Frame, mask: &OcclusionMask) -> Result<Frame> {
    Ok(diffusion_fill(warped, mask, DEFAULT_TOLERANCE, DEFAULT_MAX_SWEEPS)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_is_identity() {
        let f = Frame::from_fn(5, 4, |x, y| [x as f32 / 5.0, y as f32 / 4.0, 0.5]).unwrap();
        let out = inpaint_fallback(&f, &OcclusionMask::empty(5, 4).unwrap()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn single_hole_takes_neighbour_colour() {
        let c = [0.25f32, 0.5, 0.75];
        let f = Frame::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { [0.0; 3] } else { c }).unwrap();
        let m = OcclusionMask::from_fn(3, 3, |x, y| (x, y) == (1, 1)).unwrap();
        let out = inpaint_fallback(&f, &m).unwrap();
        assert_eq!(out.pixel(1, 1), c);
    }

    #[test]
    fn one_dimensional_laplace_solution() {
        // Harmonic interpolation on a 1x3 row is the midpoint.
        let f = Frame::new(3, 1, vec![0.2, 0.4, 0.9, 0.0, 0.0, 0.0, 0.6, 0.0, 0.1]).unwrap();
        let m = OcclusionMask::new(3, 1, vec![false, true, false]).unwrap();
        let (out, stats) = diffusion_fill(&f, &m, 1e-4, 100).unwrap();
        assert!(stats.converged);
        let want = [0.4f32, 0.2, 0.5];
        for ch in 0..3 {
            assert!((out.pixel(1, 0)[ch] - want[ch]).abs() < 1e-4);
        }
    }

    #[test]
    fn known_pixels_are_untouched_and_holes_ignore_sentinels() {
        let f = Frame::from_fn(12, 6, |x, y| [(x + y) as f32 / 20.0, 0.3, 0.8]).unwrap();
        let m = OcclusionMask::from_fn(12, 6, |x, y| (4..8).contains(&x) && y > 1).unwrap();
        let poisoned = Frame::from_fn(12, 6, |x, y| {
            if m.get(x, y) {
                [1.0, 0.0, 1.0]
            } else {
                f.pixel(x, y)
            }
        })
        .unwrap();
        let a = inpaint_fallback(&f, &m).unwrap();
        let b = inpaint_fallback(&poisoned, &m).unwrap();
        assert_eq!(a, b);
        for y in 0..6 {
            for x in 0..12 {
                if !m.get(x, y) {
                    assert_eq!(a.pixel(x, y), f.pixel(x, y));
                }
            }
        }
    }
}
