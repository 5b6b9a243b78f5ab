use crate::error::{Error, Result};
use crate::model::Frame;

/// A `channels x height x width` tensor of f64, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != channels * height * width {
            return Err(Error::BufferLength {
                expected: channels * height * width,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub(crate) fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        FeatureMap {
            channels,
            height,
            width,
            data,
        }
    }

    /// Three planes R, G, B from an interleaved frame.
    pub fn from_frame(frame: &Frame) -> Self {
        let (w, h) = frame.dims();
        let plane = w * h;
        let mut data = vec![0.0; 3 * plane];
        for (i, px) in frame.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f64;
            }
        }
        FeatureMap::from_vec(3, h, w, data)
    }

    /// Interleaves a 3-channel map back into a frame, clamping to `[0, 1]`.
    pub fn to_frame(&self) -> Result<Frame> {
        if self.channels != 3 {
            return Err(Error::ChannelPlan(format!(
                "need 3 channels for a frame, have {}",
                self.channels
            )));
        }
        let plane = self.plane_len();
        let mut data = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                data.push((self.data[c * plane + i] as f32).clamp(0.0, 1.0));
            }
        }
        Frame::new(self.width, self.height, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap::from_vec(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> FeatureMap {
        debug_assert!(self.same_shape(other));
        FeatureMap::from_vec(
            self.channels,
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert!(self.same_shape(other));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    /// Stacks maps of equal spatial size along the channel axis.
    pub fn concat(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("nothing to concatenate".into()))?;
        let (h, w) = first.spatial();
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.spatial() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: (p.width, p.height),
                });
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(FeatureMap::from_vec(channels, h, w, data))
    }

    /// Splits into channels `[0, at)` and `[at, channels)`.
    pub fn split_channels(&self, at: usize) -> (FeatureMap, FeatureMap) {
        let n = self.plane_len();
        let (a, b) = self.data.split_at(at * n);
        (
            FeatureMap::from_vec(at, self.height, self.width, a.to_vec()),
            FeatureMap::from_vec(self.channels - at, self.height, self.width, b.to_vec()),
        )
    }

    /// Nearest-neighbour upsampling by two, cropped to `(height, width)`.
    /// Source pixel `(y / 2, x / 2)` feeds target `(y, x)`.
    pub fn upsample_nearest(&self, height: usize, width: usize) -> FeatureMap {
        debug_assert_eq!(height.div_ceil(2), self.height);
        debug_assert_eq!(width.div_ceil(2), self.width);
        let mut out = FeatureMap::zeros(self.channels, height, width);
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..height {
                let srow = &src[(y / 2) * self.width..(y / 2 + 1) * self.width];
                for (x, v) in dst[y * width..(y + 1) * width].iter_mut().enumerate() {
                    *v = srow[x / 2];
                }
            }
        }
        out
    }

    /// Adjoint of [`upsample_nearest`](Self::upsample_nearest): sums each
    /// 2x2 block of `grad` back onto its source pixel.
    pub fn upsample_nearest_backward(grad: &FeatureMap, height: usize, width: usize) -> FeatureMap {
        let mut out = FeatureMap::zeros(grad.channels, height, width);
        for c in 0..grad.channels {
            let g = grad.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..grad.height {
                for x in 0..grad.width {
                    dst[(y / 2) * width + x / 2] += g[y * grad.width + x];
                }
            }
        }
        out
    }

    /// Sum over all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame::from_fn(3, 2, |x, y| [x as f32 / 3.0, y as f32 / 2.0, 0.125]).unwrap();
        let t = FeatureMap::from_frame(&f);
        assert_eq!(t.channels(), 3);
        assert_eq!(t.channel(2), &[0.125; 6]);
        assert_eq!(t.to_frame().unwrap(), f);
    }

    #[test]
    fn concat_and_split() {
        let a = FeatureMap::filled(2, 2, 3, 1.0);
        let b = FeatureMap::filled(1, 2, 3, 2.0);
        let c = FeatureMap::concat(&[&a, &b]).unwrap();
        assert_eq!(c.channels(), 3);
        let (x, y) = c.split_channels(2);
        assert_eq!((x, y), (a.clone(), b));
        assert!(FeatureMap::concat(&[&a, &FeatureMap::zeros(1, 3, 3)]).is_err());
    }

    #[test]
    fn upsample_adjoint_identity() {
        // <up(x), g> == <x, up^T(g)> for odd output sizes.
        let x = FeatureMap::new(2, 2, 3, (0..12).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let g = FeatureMap::new(2, 3, 5, (0..30).map(|v| (v as f64).sin()).collect()).unwrap();
        let up = x.upsample_nearest(3, 5);
        let lhs: f64 = up.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let back = FeatureMap::upsample_nearest_backward(&g, 2, 3);
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureMap::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
    }
}
