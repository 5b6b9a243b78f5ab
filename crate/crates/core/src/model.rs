//! Raster types shared by every stage.
//!
//! All types validate on construction and are immutable afterwards; stages
//! build new values rather than editing old ones.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

pub type Rgb = [f32; 3];

fn check_size(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok(())
}

/// An RGB raster with channel values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl TryFrom<RawFrame> for Frame {
    type Error = Error;
    fn try_from(raw: RawFrame) -> Result<Self> {
        Frame::new(raw.width, raw.height, raw.data)
    }
}

impl From<Frame> for RawFrame {
    fn from(f: Frame) -> Self {
        RawFrame {
            width: f.width,
            height: f.height,
            data: f.data,
        }
    }
}

impl Frame {
    /// Builds a frame from interleaved RGB data.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_size(width, height)?;
        if data.len() != 3 * width * height {
            return Err(Error::BufferLength {
                expected: 3 * width * height,
                actual: data.len(),
            });
        }
        for (index, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    index,
                    value: v as f64,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::from_fn(width, height, |_, _| color)
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Rgb,
    {
        check_size(width, height)?;
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Caller guarantees the invariants (values already in range).
    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), 3 * width * height);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Frame {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        let w3 = 3 * self.width;
        &self.data[y * w3..(y + 1) * w3]
    }
}

/// Horizontal pixel offsets aligned to a frame. Right-view position is
/// `x - d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScalar", into = "RawScalar")]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct RawScalar {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl TryFrom<RawScalar> for DisparityMap {
    type Error = Error;
    fn try_from(raw: RawScalar) -> Result<Self> {
        DisparityMap::new(raw.width, raw.height, raw.values)
    }
}

impl From<DisparityMap> for RawScalar {
    fn from(d: DisparityMap) -> Self {
        RawScalar {
            width: d.width,
            height: d.height,
            values: d.values,
        }
    }
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_size(width, height)?;
        if values.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                actual: values.len(),
            });
        }
        let max = width as f32;
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if !(0.0..=max).contains(&v) {
                return Err(Error::OutOfRange {
                    index,
                    value: v as f64,
                    min: 0.0,
                    max: max as f64,
                });
            }
        }
        Ok(DisparityMap {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn constant(width: usize, height: usize, d: f32) -> Result<Self> {
        Self::new(width, height, vec![d; width * height])
    }

    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f32,
    {
        check_size(width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        DisparityMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

macro_rules! bit_raster {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
        pub struct $name {
            width: usize,
            height: usize,
            bits: Vec<bool>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
                check_size(width, height)?;
                if bits.len() != width * height {
                    return Err(Error::BufferLength {
                        expected: width * height,
                        actual: bits.len(),
                    });
                }
                Ok(Self { width, height, bits })
            }

            pub fn empty(width: usize, height: usize) -> Result<Self> {
                Self::new(width, height, vec![false; width * height])
            }

            pub fn from_fn<F>(width: usize, height: usize, f: F) -> Result<Self>
            where
                F: Fn(usize, usize) -> bool,
            {
                check_size(width, height)?;
                let bits = (0..height)
                    .flat_map(|y| (0..width).map(move |x| (x, y)))
                    .map(|(x, y)| f(x, y))
                    .collect();
                Self::new(width, height, bits)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn bits(&self) -> &[bool] {
                &self.bits
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize) -> bool {
                self.bits[y * self.width + x]
            }

            pub fn row(&self, y: usize) -> &[bool] {
                &self.bits[y * self.width..(y + 1) * self.width]
            }

            pub fn count(&self) -> usize {
                self.bits.iter().filter(|&&b| b).count()
            }

            pub fn is_empty(&self) -> bool {
                !self.bits.iter().any(|&b| b)
            }
        }
    };
}

bit_raster!(
    /// Warping holes: `true` marks a target pixel that received no source.
    OcclusionMask
);
bit_raster!(
    /// Binary edge raster produced by Canny on a disparity map.
    EdgeMap
);

/// Checks that a frame and its disparity map belong together.
///
/// Disparity finiteness and sign are enforced by [`DisparityMap::new`], so
/// this reduces to a size check.
pub fn validate_pair(frame: &Frame, disparity: &DisparityMap) -> Result<()> {
    check_dims(frame.dims(), disparity.dims())
}
