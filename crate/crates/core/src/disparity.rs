//! Disparity conditioning: depth conversion and disparity expansion.
//!
//! Expansion widens foreground disparity across depth edges so that the
//! background pixels just right of a foreground object are carried into
//! the disocclusion opened by the warp, instead of leaving a hole that an
//! inpainter would fill with foreground colour.

use crate::canny::canny_edges;
use crate::config::{CannyParams, PipelineConfig};
use crate::error::{check_dims, Error, Result};
use crate::model::{DisparityMap, EdgeMap};

/// `d = clamp(gain / depth + shift, 0, width)` per pixel.
pub fn depth_to_disparity(
    width: usize,
    height: usize,
    depth: &[f32],
    gain: f32,
    shift: f32,
) -> Result<DisparityMap> {
    if depth.len() != width * height {
        return Err(Error::BufferLength {
            expected: width * height,
            actual: depth.len(),
        });
    }
    let max = width as f32;
    let mut values = Vec::with_capacity(depth.len());
    for (index, &z) in depth.iter().enumerate() {
        if !z.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if z <= 0.0 {
            return Err(Error::OutOfRange {
                index,
                value: z as f64,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        let d = gain * (1.0 / z) + shift;
        if !d.is_finite() {
            return Err(Error::NonFinite { index });
        }
        values.push(d.clamp(0.0, max));
    }
    DisparityMap::new(width, height, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionParams {
    /// Block radius `k`; each firing edge writes a `2k x 2k` block.
    pub radius: usize,
    /// Minimum left-minus-right disparity jump `lambda`.
    pub threshold: f32,
    /// Also fire on right-foreground jumps. Off by default.
    pub mirrored_polarity: bool,
    /// Used only when no edge map is supplied.
    pub canny: CannyParams,
}

impl ExpansionParams {
    pub fn new(radius: usize, threshold: f32) -> Self {
        ExpansionParams {
            radius,
            threshold,
            mirrored_polarity: false,
            canny: CannyParams::default(),
        }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Self {
        ExpansionParams {
            radius: cfg.expansion_radius,
            threshold: cfg.expansion_threshold,
            mirrored_polarity: cfg.mirrored_polarity,
            canny: cfg.canny,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::Config("expansion radius must be >= 1".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "expansion threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Expands disparity across depth edges.
///
/// Edge pixels are visited in row-major order. An edge pixel `(i, j)` with
/// `k <= j < cols - k` and `k <= i < rows - k` fires when
/// `I[i][j-1] - I[i][j+1] > lambda`, and then every pixel in rows
/// `i-k .. i+k` and columns `j-k .. j+k` (both half-open) is set to
/// `I[i][j-1]`. Reads always come from the input map; later writes
/// overwrite earlier ones.
///
/// When `edges` is `None` the edge map comes from [`canny_edges`].
pub fn expand_disparity(
    disparity: &DisparityMap,
    params: &ExpansionParams,
    edges: Option<&EdgeMap>,
) -> Result<DisparityMap> {
    params.validate()?;
    let computed;
    let edges = match edges {
        Some(e) => {
            check_dims(disparity.dims(), e.dims())?;
            e
        }
        None => {
            computed = canny_edges(disparity, &params.canny)?;
            &computed
        }
    };

    let (cols, rows) = disparity.dims();
    let k = params.radius;
    let src = disparity.values();
    let mut out = src.to_vec();
    if cols < 2 * k + 1 || rows < 2 * k {
        return Ok(disparity.clone());
    }
    let at = |i: usize, j: usize| src[i * cols + j];
    let mut fill = |i: usize, j0: usize, value: f32| {
        for r in i - k..i + k {
            out[r * cols + j0..r * cols + j0 + 2 * k].fill(value);
        }
    };

    for i in k..rows - k {
        for j in k..cols - k {
            if !edges.get(j, i) {
                continue;
            }
            let (left, right) = (at(i, j - 1), at(i, j + 1));
            if left - right > params.threshold {
                fill(i, j - k, left);
            } else if params.mirrored_polarity && right - left > params.threshold {
                fill(i, j + 1 - k, right);
            }
        }
    }
    // Writes copy existing input values, so invariants still hold.
    Ok(DisparityMap::from_raw_unchecked(cols, rows, out))
}
