//! Canny edge detection on scalar rasters.
//!
//! Stages: Gaussian blur (kernel truncated at 3 sigma, clamped borders),
//! 3x3 Sobel gradients, non-maximum suppression with the gradient angle
//! quantized to four directions, and double-threshold hysteresis over
//! 8-connected neighbours.

use std::collections::VecDeque;

use crate::config::CannyParams;
use crate::error::Result;
use crate::model::{DisparityMap, EdgeMap};
use crate::par;

pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i32;
    let s2 = 2.0 * sigma * sigma;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / s2).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(values: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let horizontal: Vec<f32> = par::map_range(height, |y| {
        let row = &values[y * width..(y + 1) * width];
        (0..width)
            .map(|x| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * row[clamp_index(x as isize + i as isize - r, width)])
                    .sum::<f32>()
            })
            .collect::<Vec<_>>()
    })
    .concat();
    par::map_range(height, |y| {
        (0..width)
            .map(|x| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        w * horizontal[clamp_index(y as isize + i as isize - r, height) * width + x]
                    })
                    .sum::<f32>()
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Sobel responses `(gx, gy)` with clamped borders; y grows downwards.
pub fn sobel(values: &[f32], width: usize, height: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| values[clamp_index(y, height) * width + clamp_index(x, width)];
    let rows: Vec<Vec<(f32, f32)>> = par::map_range(height, |y| {
        let y = y as isize;
        (0..width as isize)
            .map(|x| {
                let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                (gx, gy)
            })
            .collect()
    });
    rows.into_iter().flatten().unzip()
}

/// Neighbour offsets along the quantized gradient direction.
fn direction_offsets(gx: f32, gy: f32) -> [(isize, isize); 2] {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        [(1, 0), (-1, 0)]
    } else if angle < 67.5 {
        [(1, 1), (-1, -1)]
    } else if angle < 112.5 {
        [(0, 1), (0, -1)]
    } else {
        [(-1, 1), (1, -1)]
    }
}

pub fn non_maximum_suppression(
    magnitude: &[f32],
    gx: &[f32],
    gy: &[f32],
    width: usize,
    height: usize,
) -> Vec<f32> {
    let mag_at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            magnitude[y as usize * width + x as usize]
        }
    };
    par::map_range(height, |y| {
        (0..width)
            .map(|x| {
                let i = y * width + x;
                let m = magnitude[i];
                if m <= 0.0 {
                    return 0.0;
                }
                let [(ax, ay), (bx, by)] = direction_offsets(gx[i], gy[i]);
                let (x, y) = (x as isize, y as isize);
                if m >= mag_at(x + ax, y + ay) && m >= mag_at(x + bx, y + by) {
                    m
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Keeps weak pixels (>= `low`) only when 8-connected to a strong one (>= `high`).
pub fn hysteresis(suppressed: &[f32], width: usize, height: usize, low: f32, high: f32) -> Vec<bool> {
    let mut edges = vec![false; width * height];
    let mut queue = VecDeque::new();
    for (i, &m) in suppressed.iter().enumerate() {
        if m >= high && m > 0.0 {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % width) as isize, (i / width) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if !edges[j] && suppressed[j] >= low && suppressed[j] > 0.0 {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

/// Runs the full Canny chain on a disparity map.
pub fn canny_edges(disparity: &DisparityMap, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let (w, h) = disparity.dims();
    let blurred = gaussian_blur(disparity.values(), w, h, params.sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let magnitude: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = magnitude.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return EdgeMap::empty(w, h);
    }
    let (low, high) = if params.relative {
        (params.low * max, params.high * max)
    } else {
        (params.low, params.high)
    };
    let suppressed = non_maximum_suppression(&magnitude, &gx, &gy, w, h);
    EdgeMap::new(w, h, hysteresis(&suppressed, w, h, low, high))
}
