//! 2-D convolution with zero "same" padding and stride 1 or 2.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::FeatureMap;
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    /// `out x in x kh x kw`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: FeatureMap,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Output extent of a padded convolution along one axis.
#[inline]
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}

/// Range of output positions whose tap `k` (with padding `pad`) reads a
/// valid input index `o * stride + k - pad` in `[0, len)`.
#[inline]
fn valid_outputs(out_len: usize, len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // o * stride + k >= pad  and  o * stride + k - pad < len
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            kh: kernel,
            kw: kernel,
            stride,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform init with variance `1 / fan_in`; values are f32-representable
    /// so they survive the f32 weights file unchanged. Biases start at zero.
    pub fn random<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = (3.0 / (in_channels * kernel * kernel) as f64).sqrt() as f32;
        for w in &mut layer.weight {
            *w = rng.gen_range(-bound..bound) as f64;
        }
        layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.kh.is_multiple_of(2) || self.kw.is_multiple_of(2) {
            return Err(Error::ChannelPlan(format!(
                "kernel {}x{} must be odd",
                self.kh, self.kw
            )));
        }
        if !(self.stride == 1 || self.stride == 2) {
            return Err(Error::ChannelPlan(format!("stride {} unsupported", self.stride)));
        }
        if self.weight.len() != self.out_channels * self.in_channels * self.kh * self.kw
            || self.bias.len() != self.out_channels
        {
            return Err(Error::ChannelPlan("weight buffer size".into()));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite convolution weight".into()));
        }
        Ok(())
    }

    /// One layer computing every given layer's output channels in order.
    /// The layers must agree on input channels, kernel and stride, so a
    /// shared input is unfolded once.
    pub fn stack(layers: &[&ConvLayer]) -> Result<ConvLayer> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Empty("no layers to stack".into()))?;
        let shape = |l: &ConvLayer| (l.in_channels, l.kh, l.kw, l.stride);
        if layers.iter().any(|l| shape(l) != shape(first)) {
            return Err(Error::ChannelPlan("stacked layers differ in input or kernel".into()));
        }
        Ok(ConvLayer {
            out_channels: layers.iter().map(|l| l.out_channels).sum(),
            weight: layers.iter().flat_map(|l| l.weight.iter().copied()).collect(),
            bias: layers.iter().flat_map(|l| l.bias.iter().copied()).collect(),
            ..(*first).clone()
        })
    }

    /// Splits the weight and bias of a stacked layer (or its gradients)
    /// back into layers shaped like `like`.
    pub fn unstack(&self, like: &[&ConvLayer]) -> Vec<ConvLayer> {
        let taps = self.taps();
        let mut o = 0;
        like.iter()
            .map(|l| {
                let n = l.out_channels;
                let part = ConvLayer {
                    weight: self.weight[o * taps..(o + n) * taps].to_vec(),
                    bias: self.bias[o..o + n].to_vec(),
                    ..(*l).clone()
                };
                o += n;
                part
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_shape(&self, height: usize, width: usize) -> (usize, usize) {
        (conv_out_len(height, self.stride), conv_out_len(width, self.stride))
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::ChannelPlan(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    fn taps(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    /// Output rows per band. Fixed by the layer and input shape only, so
    /// the band split (and every sum it implies) is the same for any
    /// thread count.
    fn band_rows(&self, oh: usize, ow: usize) -> usize {
        (BAND_ELEMS / (self.taps() * ow).max(1)).clamp(1, oh.max(1))
    }

    /// Unfolds output rows `r0..r1` into a `taps x ((r1 - r0) * ow)`
    /// matrix of the input values each tap reads, zero where padding.
    fn im2col(&self, x: &FeatureMap, r0: usize, r1: usize, ow: usize) -> Vec<f64> {
        let (h, w) = x.spatial();
        let (ph, pw, s) = (self.kh / 2, self.kw / 2, self.stride);
        let cols = (r1 - r0) * ow;
        let oh = conv_out_len(h, s);
        let mut m = vec![0.0; self.taps() * cols];
        for i in 0..self.in_channels {
            let src = x.channel(i);
            for ky in 0..self.kh {
                let (y0, y1) = valid_outputs(oh, h, s, ky, ph);
                for kx in 0..self.kw {
                    let (x0, x1) = valid_outputs(ow, w, s, kx, pw);
                    let t = (i * self.kh + ky) * self.kw + kx;
                    let row = &mut m[t * cols..(t + 1) * cols];
                    for oy in y0.max(r0)..y1.min(r1) {
                        let srow = &src[(oy * s + ky - ph) * w..][..w];
                        let dst = &mut row[(oy - r0) * ow..][..ow];
                        if s == 1 {
                            let off = x0 + kx - pw;
                            dst[x0..x1].copy_from_slice(&srow[off..off + x1 - x0]);
                        } else {
                            for ox in x0..x1 {
                                dst[ox] = srow[ox * s + kx - pw];
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// Scatter-adds a `taps x cols` column matrix for output rows
    /// `r0..r1` back onto input rows starting at `base`.
    fn col2im(&self, m: &[f64], r0: usize, r1: usize, (h, w): (usize, usize), base: usize, acc: &mut [f64], acc_rows: usize) {
        let (ph, pw, s) = (self.kh / 2, self.kw / 2, self.stride);
        let (oh, ow) = self.output_shape(h, w);
        let cols = (r1 - r0) * ow;
        for i in 0..self.in_channels {
            let plane = &mut acc[i * acc_rows * w..(i + 1) * acc_rows * w];
            for ky in 0..self.kh {
                let (y0, y1) = valid_outputs(oh, h, s, ky, ph);
                for kx in 0..self.kw {
                    let (x0, x1) = valid_outputs(ow, w, s, kx, pw);
                    let t = (i * self.kh + ky) * self.kw + kx;
                    let row = &m[t * cols..(t + 1) * cols];
                    for oy in y0.max(r0)..y1.min(r1) {
                        let src = &row[(oy - r0) * ow..][..ow];
                        let drow = &mut plane[(oy * s + ky - ph - base) * w..][..w];
                        if s == 1 {
                            let off = x0 + kx - pw;
                            for (d, v) in drow[off..off + x1 - x0].iter_mut().zip(&src[x0..x1]) {
                                *d += v;
                            }
                        } else {
                            for ox in x0..x1 {
                                drow[ox * s + kx - pw] += src[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn bands(&self, oh: usize, ow: usize) -> Vec<(usize, usize)> {
        let step = self.band_rows(oh, ow);
        (0..oh).step_by(step).map(|r| (r, (r + step).min(oh))).collect()
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check_input(x)?;
        let (h, w) = x.spatial();
        let (oh, ow) = self.output_shape(h, w);
        let taps = self.taps();
        let bands = self.bands(oh, ow);
        let parts = par::map_slice(&bands, |&(r0, r1)| {
            let cols = (r1 - r0) * ow;
            let m = self.im2col(x, r0, r1, ow);
            let mut c = vec![0.0; self.out_channels * cols];
            for (o, row) in c.chunks_mut(cols).enumerate() {
                row.fill(self.bias[o]);
            }
            // c (out x cols) += W (out x taps) * m (taps x cols)
            gemm(
                self.out_channels, taps, cols,
                Mat::row_major(&self.weight, taps),
                Mat::row_major(&m, cols),
                &mut c, cols,
            );
            c
        });
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for (&(r0, r1), c) in bands.iter().zip(parts) {
            let cols = (r1 - r0) * ow;
            for o in 0..self.out_channels {
                out[o * oh * ow + r0 * ow..][..cols].copy_from_slice(&c[o * cols..(o + 1) * cols]);
            }
        }
        Ok(FeatureMap::from_vec(self.out_channels, oh, ow, out))
    }

    /// Gradients of a scalar objective with respect to input, weight and
    /// bias, given its gradient with respect to the output.
    pub fn backward(&self, x: &FeatureMap, grad_out: &FeatureMap) -> Result<ConvGrads> {
        self.check_input(x)?;
        let (h, w) = x.spatial();
        let (oh, ow) = self.output_shape(h, w);
        if grad_out.channels() != self.out_channels || grad_out.spatial() != (oh, ow) {
            return Err(Error::ChannelPlan("gradient shape does not match output".into()));
        }
        let (ph, s) = (self.kh / 2, self.stride);
        let taps = self.taps();
        let plane = oh * ow;

        let bias: Vec<f64> = (0..self.out_channels)
            .map(|o| grad_out.channel(o).iter().sum())
            .collect();

        let bands = self.bands(oh, ow);
        let g = grad_out.data();
        // Per band: weight-gradient contribution, and the input gradient
        // over the input rows the band touches.
        let parts = par::map_slice(&bands, |&(r0, r1)| {
            let cols = (r1 - r0) * ow;
            let gband = Mat {
                data: &g[r0 * ow..],
                rs: plane as isize,
                cs: 1,
            };
            let m = self.im2col(x, r0, r1, ow);
            let mut gw = vec![0.0; self.out_channels * taps];
            // gw (out x taps) = G (out x cols) * m^T (cols x taps)
            gemm(self.out_channels, cols, taps, gband, Mat { data: &m, rs: 1, cs: cols as isize }, &mut gw, taps);

            let mut dm = vec![0.0; taps * cols];
            // dm (taps x cols) = W^T (taps x out) * G (out x cols)
            gemm(taps, self.out_channels, cols, Mat { data: &self.weight, rs: 1, cs: taps as isize }, gband, &mut dm, cols);
            let base = (r0 * s).saturating_sub(ph);
            let top = ((r1 - 1) * s + self.kh - ph).min(h);
            let rows = top - base;
            let mut gi = vec![0.0; self.in_channels * rows * w];
            self.col2im(&dm, r0, r1, (h, w), base, &mut gi, rows);
            (gw, base, rows, gi)
        });

        let mut weight = vec![0.0; self.out_channels * taps];
        let mut input = vec![0.0; self.in_channels * h * w];
        for (gw, base, rows, gi) in parts {
            for (a, b) in weight.iter_mut().zip(&gw) {
                *a += b;
            }
            for i in 0..self.in_channels {
                let dst = &mut input[(i * h + base) * w..][..rows * w];
                for (a, b) in dst.iter_mut().zip(&gi[i * rows * w..(i + 1) * rows * w]) {
                    *a += b;
                }
            }
        }

        Ok(ConvGrads {
            input: FeatureMap::from_vec(self.in_channels, h, w, input),
            weight,
            bias,
        })
    }
}

/// Upper bound on `taps x band pixels` per unfolded band.
const BAND_ELEMS: usize = 1 << 16;

/// A strided read-only matrix view.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

impl<'a> Mat<'a> {
    fn row_major(data: &'a [f64], cols: usize) -> Self {
        Mat {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Largest linear offset an `m x n` view reads.
    fn span(&self, m: usize, n: usize) -> usize {
        (m.saturating_sub(1)) * self.rs as usize + (n.saturating_sub(1)) * self.cs as usize
    }
}

/// `c (m x n, row-major, row stride ldc) += a (m x k) * b (k x n)`.
fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, c: &mut [f64], ldc: usize) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.span(m, k) < a.data.len() && b.span(k, n) < b.data.len());
    assert!((m - 1) * ldc + n <= c.len() && n <= ldc);
    // SAFETY: the assertions above keep every access inside the slices;
    // `c` is borrowed mutably and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0, a.data.as_ptr(), a.rs, a.cs,
            b.data.as_ptr(), b.rs, b.cs,
            1.0, c.as_mut_ptr(), ldc as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    /// Direct nested-loop convolution, independent of the slice tricks above.
    pub(crate) fn naive_conv(layer: &ConvLayer, x: &FeatureMap) -> FeatureMap {
        let (h, w) = x.spatial();
        let (oh, ow) = ((h - 1) / layer.stride + 1, (w - 1) / layer.stride + 1);
        let mut out = FeatureMap::zeros(layer.out_channels, oh, ow);
        for o in 0..layer.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for i in 0..layer.in_channels {
                        for ky in 0..layer.kh {
                            for kx in 0..layer.kw {
                                let iy = (oy * layer.stride + ky) as isize - (layer.kh / 2) as isize;
                                let ix = (ox * layer.stride + kx) as isize - (layer.kw / 2) as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let wi = ((o * layer.in_channels + i) * layer.kh + ky) * layer.kw + kx;
                                acc += layer.weight[wi] * x.channel(i)[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    out.channel_mut(o)[oy * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn random_input(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = seeded_rng(seed);
        FeatureMap::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let mut rng = seeded_rng(5);
        for (stride, k, h, w) in [(1, 3, 5, 7), (2, 3, 5, 7), (2, 3, 8, 8), (1, 5, 4, 6), (2, 1, 3, 3)] {
            let mut layer = ConvLayer::random(3, 4, k, stride, &mut rng);
            layer.bias = vec![0.1, -0.2, 0.3, 0.0];
            let x = random_input(3, h, w, 9);
            let fast = layer.forward(&x).unwrap();
            let slow = naive_conv(&layer, &x);
            assert_eq!(fast.spatial(), slow.spatial());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_the_adjoint_of_forward() {
        // For the linear part L(x) = conv(x) - bias:
        // <L(x), g> == <x, dL/dx^T g> and == <weight, dW> (linear in weight).
        let mut rng = seeded_rng(6);
        for stride in [1, 2] {
            let layer = ConvLayer::random(2, 3, 3, stride, &mut rng);
            let x = random_input(2, 5, 6, 1);
            let y = layer.forward(&x).unwrap();
            let g = random_input(3, y.height(), y.width(), 2);
            let lin: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>()
                - (0..3).map(|o| layer.bias[o] * g.channel(o).iter().sum::<f64>()).sum::<f64>();
            let grads = layer.backward(&x, &g).unwrap();
            let via_input: f64 = x.data().iter().zip(grads.input.data()).map(|(a, b)| a * b).sum();
            let via_weight: f64 = layer.weight.iter().zip(&grads.weight).map(|(a, b)| a * b).sum();
            assert!((lin - via_input).abs() < 1e-10, "{lin} vs {via_input}");
            assert!((lin - via_weight).abs() < 1e-10, "{lin} vs {via_weight}");
            for o in 0..3 {
                assert!((grads.bias[o] - g.channel(o).iter().sum::<f64>()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stacked_layers_reproduce_each_output() {
        let mut rng = seeded_rng(8);
        let a = ConvLayer::random(3, 2, 3, 1, &mut rng);
        let mut b = ConvLayer::random(3, 1, 3, 1, &mut rng);
        b.bias = vec![0.25];
        let x = random_input(3, 6, 5, 4);
        let both = ConvLayer::stack(&[&a, &b]).unwrap();
        let (ya, yb) = both.forward(&x).unwrap().split_channels(2);
        assert_eq!(ya, a.forward(&x).unwrap());
        assert_eq!(yb, b.forward(&x).unwrap());
        assert_eq!(both.unstack(&[&a, &b]), vec![a.clone(), b]);
        assert!(ConvLayer::stack(&[&a, &ConvLayer::zeros(2, 1, 3, 1)]).is_err());
    }

    #[test]
    fn output_lengths() {
        assert_eq!(conv_out_len(8, 2), 4);
        assert_eq!(conv_out_len(7, 2), 4);
        assert_eq!(conv_out_len(1, 2), 1);
        assert_eq!(conv_out_len(9, 1), 9);
    }

    #[test]
    fn rejects_wrong_channel_count_and_even_kernels() {
        let layer = ConvLayer::zeros(3, 2, 3, 1);
        assert!(layer.forward(&FeatureMap::zeros(2, 4, 4)).is_err());
        assert!(ConvLayer::zeros(3, 2, 2, 1).validate().is_err());
    }
}
