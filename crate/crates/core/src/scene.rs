//! Synthetic stereo scenes with known right views.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{DisparityMap, Frame, OcclusionMask, Rgb};
use crate::rng::seeded_rng;

/// Vertical colour bar in front of a striped background.
#[derive(Debug, Clone)]
pub struct BarScene {
    pub frame: Frame,
    pub disparity: DisparityMap,
    pub background: Vec<Rgb>,
    pub foreground: Vec<Rgb>,
}

pub const BAR_BACKGROUND: [Rgb; 3] = [[0.15, 0.35, 0.75], [0.1, 0.55, 0.6], [0.25, 0.3, 0.9]];
pub const BAR_FOREGROUND: [Rgb; 2] = [[0.9, 0.15, 0.1], [0.8, 0.3, 0.05]];
const STRIPE: usize = 4;

/// `bar` is the half-open column range carrying disparity `d`; the bar's
/// colour extends `overhang` columns further right than its disparity, the
/// misalignment that makes hole filling pick up foreground colour.
pub fn bar_scene(
    width: usize,
    height: usize,
    bar: (usize, usize),
    d: f32,
    overhang: usize,
) -> Result<BarScene> {
    let (x0, x1) = bar;
    if !(x0 < x1 && x1 + overhang < width) || d < 0.0 || d > x0 as f32 {
        return Err(Error::Config(format!(
            "bar {x0}..{x1} (+{overhang}) with disparity {d} does not fit width {width}"
        )));
    }
    let frame = Frame::from_fn(width, height, |x, y| {
        if x >= x0 && x < x1 + overhang {
            BAR_FOREGROUND[y % 2]
        } else {
            BAR_BACKGROUND[(x / STRIPE) % 3]
        }
    })?;
    let disparity = DisparityMap::from_fn(width, height, |x, _| if x >= x0 && x < x1 { d } else { 0.0 })?;
    Ok(BarScene {
        frame,
        disparity,
        background: BAR_BACKGROUND.to_vec(),
        foreground: BAR_FOREGROUND.to_vec(),
    })
}

/// Euclidean RGB distance to the nearest palette entry.
pub fn palette_distance(c: Rgb, palette: &[Rgb]) -> f64 {
    palette
        .iter()
        .map(|p| {
            (0..3)
                .map(|k| {
                    let d = c[k] as f64 - p[k] as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Mean [`palette_distance`] over the pixels set in `mask`.
pub fn mean_palette_distance(frame: &Frame, mask: &OcclusionMask, palette: &[Rgb]) -> Result<f64> {
    crate::error::check_dims(frame.dims(), mask.dims())?;
    let (w, h) = frame.dims();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                sum += palette_distance(frame.pixel(x, y), palette);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Empty("mask selects no pixels".into()));
    }
    Ok(sum / n as f64)
}

/// Smoothly textured background at zero disparity with a textured
/// rectangle at integer disparity `d`; the right view is known in closed
/// form.
#[derive(Debug, Clone)]
pub struct AnalyticScene {
    pub left: Frame,
    pub disparity: DisparityMap,
    pub right: Frame,
    /// Right-view pixels hidden in the left view.
    pub disoccluded: OcclusionMask,
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyticParams {
    pub width: usize,
    pub height: usize,
    /// Half-open `(x0, y0, x1, y1)` in the left view.
    pub rect: (usize, usize, usize, usize),
    pub d: usize,
    /// Texture phase; different phases give different images.
    pub phase: f32,
}

fn background(x: usize, y: usize, phase: f32) -> Rgb {
    let (x, y) = (x as f32, y as f32);
    [
        0.5 + 0.2 * (0.11 * x + phase).sin() * (0.07 * y).cos(),
        0.45 + 0.15 * (0.05 * x + 0.09 * y + 2.0 * phase).sin(),
        0.55 + 0.2 * (0.08 * y - phase).cos(),
    ]
}

fn foreground(x: usize, y: usize, phase: f32) -> Rgb {
    let (x, y) = (x as f32, y as f32);
    [
        0.8 + 0.1 * (0.2 * x + phase).sin(),
        0.25 + 0.1 * (0.15 * y).cos(),
        0.2 + 0.1 * (0.1 * (x + y) + phase).sin(),
    ]
}

pub fn analytic_scene(p: &AnalyticParams) -> Result<AnalyticScene> {
    let (x0, y0, x1, y1) = p.rect;
    if !(x0 < x1 && y0 < y1 && x1 <= p.width && y1 <= p.height && x0 >= p.d && x1 - x0 > p.d) {
        return Err(Error::Config(format!(
            "rectangle {:?} with disparity {} does not fit {}x{}",
            p.rect, p.d, p.width, p.height
        )));
    }
    let inside = |x: usize, y: usize| x >= x0 && x < x1 && y >= y0 && y < y1;
    let left = Frame::from_fn(p.width, p.height, |x, y| {
        if inside(x, y) {
            foreground(x, y, p.phase)
        } else {
            background(x, y, p.phase)
        }
    })?;
    let disparity =
        DisparityMap::from_fn(p.width, p.height, |x, y| if inside(x, y) { p.d as f32 } else { 0.0 })?;
    let right = Frame::from_fn(p.width, p.height, |x, y| {
        if inside(x + p.d, y) {
            foreground(x + p.d, y, p.phase)
        } else {
            background(x, y, p.phase)
        }
    })?;
    let disoccluded = OcclusionMask::from_fn(p.width, p.height, |x, y| {
        y >= y0 && y < y1 && x >= x1 - p.d && x < x1
    })?;
    Ok(AnalyticScene {
        left,
        disparity,
        right,
        disoccluded,
    })
}

/// Random rectangle placement and texture phase for a `width x height` scene.
pub fn random_analytic_params(width: usize, height: usize, d: usize, seed: u64) -> Result<AnalyticParams> {
    if width < 4 * d + 8 || height < 8 {
        return Err(Error::Config(format!("{width}x{height} too small for disparity {d}")));
    }
    let mut rng = seeded_rng(seed);
    let rw = rng.gen_range(d + 4..=width / 2);
    let x0 = rng.gen_range(d..=width - rw);
    let rh = rng.gen_range(height / 4..=height / 2);
    let y0 = rng.gen_range(0..=height - rh);
    Ok(AnalyticParams {
        width,
        height,
        rect: (x0, y0, x0 + rw, y0 + rh),
        d,
        phase: rng.gen_range(0.0..std::f32::consts::TAU),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::forward_warp;

    #[test]
    fn analytic_right_view_agrees_with_warp_outside_holes() {
        let p = AnalyticParams {
            width: 40,
            height: 20,
            rect: (10, 5, 25, 15),
            d: 4,
            phase: 0.3,
        };
        let s = analytic_scene(&p).unwrap();
        let w = forward_warp(&s.left, &s.disparity).unwrap();
        assert_eq!(w.mask, s.disoccluded);
        for y in 0..20 {
            for x in 0..40 {
                if !s.disoccluded.get(x, y) {
                    assert_eq!(w.warped.pixel(x, y), s.right.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn bar_scene_palettes() {
        let s = bar_scene(64, 8, (20, 30), 6.0, 1).unwrap();
        assert_eq!(palette_distance(s.frame.pixel(30, 0), &s.foreground), 0.0);
        assert_eq!(palette_distance(s.frame.pixel(31, 0), &s.background), 0.0);
        assert!(bar_scene(64, 8, (2, 30), 6.0, 1).is_err());
    }

    #[test]
    fn random_params_fit() {
        for seed in 0..50 {
            let p = random_analytic_params(64, 64, 6, seed).unwrap();
            analytic_scene(&p).unwrap();
        }
    }
}
