//! Training objective: occlusion-weighted L1, feature-space L1, critic
//! score gap, and their weighted sum. Each loss comes with its gradient
//! with respect to the predicted image.
//!
//! Normalization: the content loss divides by the pixel count (channels are
//! summed), each perceptual level divides by its element count.

use crate::config::LossWeights;
use crate::error::{Error, Result};
use crate::model::OcclusionMask;
use crate::nn::{ConvLayer, FeatureMap};
use crate::rng::seeded_rng;

fn check_pair(pred: &FeatureMap, gt: &FeatureMap) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(Error::DimensionMismatch {
            expected: (gt.width(), gt.height()),
            actual: (pred.width(), pred.height()),
        });
    }
    Ok(())
}

fn check_mask(pred: &FeatureMap, mask: &OcclusionMask) -> Result<()> {
    if mask.dims() != (pred.width(), pred.height()) {
        return Err(Error::DimensionMismatch {
            expected: (pred.width(), pred.height()),
            actual: mask.dims(),
        });
    }
    Ok(())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(alpha * sum_{occluded} |gt - pred| + sum_{known} |gt - pred|) / pixels`.
pub fn content_loss(pred: &FeatureMap, gt: &FeatureMap, mask: &OcclusionMask, alpha: f64) -> Result<f64> {
    check_pair(pred, gt)?;
    check_mask(pred, mask)?;
    let n = pred.plane_len();
    let mut sum = 0.0;
    for c in 0..pred.channels() {
        let (p, g) = (pred.channel(c), gt.channel(c));
        for i in 0..n {
            let w = if mask.bits()[i] { alpha } else { 1.0 };
            sum += w * (g[i] - p[i]).abs();
        }
    }
    Ok(sum / n as f64)
}

/// Gradient of [`content_loss`] with respect to `pred` (zero where equal).
pub fn content_loss_grad(
    pred: &FeatureMap,
    gt: &FeatureMap,
    mask: &OcclusionMask,
    alpha: f64,
) -> Result<FeatureMap> {
    check_pair(pred, gt)?;
    check_mask(pred, mask)?;
    let n = pred.plane_len();
    let mut out = FeatureMap::zeros(pred.channels(), pred.height(), pred.width());
    for c in 0..pred.channels() {
        let (p, g) = (pred.channel(c), gt.channel(c));
        let o = out.channel_mut(c);
        for i in 0..n {
            let w = if mask.bits()[i] { alpha } else { 1.0 };
            o[i] = w * sign(p[i] - g[i]) / n as f64;
        }
    }
    Ok(out)
}

/// Maps an image to a list of feature levels.
pub trait FeatureExtractor: Sync {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>>;

    /// Gradient with respect to `image` of `sum_j <grads[j], phi_j(image)>`.
    fn backward(&self, image: &FeatureMap, grads: &[FeatureMap]) -> Result<FeatureMap>;
}

/// One level: the image itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        Ok(vec![image.clone()])
    }

    fn backward(&self, _image: &FeatureMap, grads: &[FeatureMap]) -> Result<FeatureMap> {
        grads
            .first()
            .cloned()
            .ok_or_else(|| Error::Empty("no feature gradients".into()))
    }
}

/// Fixed random stride-2 convolutions with `tanh`, one feature level per layer.
#[derive(Debug, Clone)]
pub struct ConvPyramidExtractor {
    pub layers: Vec<ConvLayer>,
}

impl ConvPyramidExtractor {
    pub const DEFAULT_SEED: u64 = 0x5eed_f00d;

    pub fn new(channels: &[usize], seed: u64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::ChannelPlan("extractor needs at least one level".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut cin = 3;
        let layers = channels
            .iter()
            .map(|&c| {
                let l = ConvLayer::random(cin, c, 3, 2, &mut rng);
                cin = c;
                l
            })
            .collect();
        Ok(ConvPyramidExtractor { layers })
    }

    fn activations(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        let mut out: Vec<FeatureMap> = Vec::with_capacity(self.layers.len());
        for (j, l) in self.layers.iter().enumerate() {
            let src = if j == 0 { image } else { &out[j - 1] };
            let a = l.forward(src)?.map(f64::tanh);
            out.push(a);
        }
        Ok(out)
    }
}

impl Default for ConvPyramidExtractor {
    fn default() -> Self {
        Self::new(&[8, 16, 32], Self::DEFAULT_SEED).expect("non-empty plan")
    }
}

impl FeatureExtractor for ConvPyramidExtractor {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        self.activations(image)
    }

    fn backward(&self, image: &FeatureMap, grads: &[FeatureMap]) -> Result<FeatureMap> {
        if grads.len() != self.layers.len() {
            return Err(Error::ChannelPlan(format!(
                "{} level gradients for {} levels",
                grads.len(),
                self.layers.len()
            )));
        }
        let acts = self.activations(image)?;
        let mut g = grads[grads.len() - 1].clone();
        for j in (0..self.layers.len()).rev() {
            let g_pre = g.zip_map(&acts[j], |g, a| g * (1.0 - a * a));
            let src = if j == 0 { image } else { &acts[j - 1] };
            let mut g_in = self.layers[j].backward(src, &g_pre)?.input;
            if j > 0 {
                g_in.add_assign(&grads[j - 1]);
            }
            g = g_in;
        }
        Ok(g)
    }
}

fn level_pairs(
    pred: &FeatureMap,
    gt: &FeatureMap,
    extractor: &dyn FeatureExtractor,
) -> Result<(Vec<FeatureMap>, Vec<FeatureMap>)> {
    check_pair(pred, gt)?;
    let fp = extractor.extract(pred)?;
    let fg = extractor.extract(gt)?;
    if fp.len() != fg.len() || fp.iter().zip(&fg).any(|(a, b)| !a.same_shape(b)) {
        return Err(Error::ChannelPlan("feature pyramids differ in shape".into()));
    }
    Ok((fp, fg))
}

/// `sum_j mean |phi_j(gt) - phi_j(pred)|`.
pub fn perceptual_loss(pred: &FeatureMap, gt: &FeatureMap, extractor: &dyn FeatureExtractor) -> Result<f64> {
    let (fp, fg) = level_pairs(pred, gt, extractor)?;
    Ok(fp
        .iter()
        .zip(&fg)
        .map(|(a, b)| {
            let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (y - x).abs()).sum();
            s / a.data().len() as f64
        })
        .sum())
}

pub fn perceptual_loss_grad(
    pred: &FeatureMap,
    gt: &FeatureMap,
    extractor: &dyn FeatureExtractor,
) -> Result<FeatureMap> {
    let (fp, fg) = level_pairs(pred, gt, extractor)?;
    let grads: Vec<FeatureMap> = fp
        .iter()
        .zip(&fg)
        .map(|(a, b)| {
            let n = a.data().len() as f64;
            a.zip_map(b, |x, y| sign(x - y) / n)
        })
        .collect();
    extractor.backward(pred, &grads)
}

/// `mean(d_fake) - mean(d_real)`.
pub fn adversarial_loss(d_fake: &[f64], d_real: &[f64]) -> Result<f64> {
    if d_fake.is_empty() || d_real.is_empty() {
        return Err(Error::Empty("adversarial loss needs non-empty batches".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(d_fake) - mean(d_real))
}

/// `l1 * content + l2 * perceptual + l3 * adversarial`.
pub fn total_loss(content: f64, perceptual: f64, adversarial: f64, l1: f64, l2: f64, l3: f64) -> f64 {
    l1 * content + l2 * perceptual + l3 * adversarial
}

pub fn weighted_total(content: f64, perceptual: f64, adversarial: f64, w: &LossWeights) -> f64 {
    total_loss(content, perceptual, adversarial, w.content, w.perceptual, w.adversarial)
}

/// Scores an image with a scalar.
pub trait Critic: Sync {
    fn score(&self, image: &FeatureMap) -> Result<f64>;
    fn input_grad(&self, image: &FeatureMap) -> Result<FeatureMap>;
}

/// Two-layer critic: stride-2 convolution with `tanh`, spatial mean, then
/// a linear read-out.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiscriminator {
    pub conv: ConvLayer,
    pub head: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl ToyDiscriminator {
    pub fn new(hidden: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let conv = ConvLayer::random(3, hidden, 3, 2, &mut rng);
        let bound = (3.0 / hidden as f64).sqrt();
        let head = (0..hidden).map(|_| rng.gen_range(-bound..bound)).collect();
        ToyDiscriminator {
            conv,
            head,
            head_bias: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        ToyDiscriminator {
            conv: ConvLayer::zeros(
                self.conv.in_channels,
                self.conv.out_channels,
                self.conv.kh,
                self.conv.stride,
            ),
            head: vec![0.0; self.head.len()],
            head_bias: vec![0.0],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.conv.weight, &self.conv.bias, &self.head, &self.head_bias]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.conv.weight,
            &mut self.conv.bias,
            &mut self.head,
            &mut self.head_bias,
        ]
    }

    fn hidden(&self, image: &FeatureMap) -> Result<(FeatureMap, Vec<f64>)> {
        let a = self.conv.forward(image)?.map(f64::tanh);
        let n = a.plane_len() as f64;
        let pooled = (0..a.channels()).map(|c| a.channel(c).iter().sum::<f64>() / n).collect();
        Ok((a, pooled))
    }

    /// Score plus gradients with respect to parameters and input.
    pub fn score_and_grads(&self, image: &FeatureMap) -> Result<(f64, ToyDiscriminator, FeatureMap)> {
        let (a, pooled) = self.hidden(image)?;
        let score = self.head_bias[0] + self.head.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>();
        let n = a.plane_len() as f64;
        let mut g_pre = FeatureMap::zeros(a.channels(), a.height(), a.width());
        for c in 0..a.channels() {
            let wc = self.head[c];
            for (g, &v) in g_pre.channel_mut(c).iter_mut().zip(a.channel(c)) {
                *g = wc / n * (1.0 - v * v);
            }
        }
        let cg = self.conv.backward(image, &g_pre)?;
        let mut grads = self.zeros_like();
        grads.conv.weight = cg.weight;
        grads.conv.bias = cg.bias;
        grads.head = pooled;
        grads.head_bias = vec![1.0];
        Ok((score, grads, cg.input))
    }
}

impl Critic for ToyDiscriminator {
    fn score(&self, image: &FeatureMap) -> Result<f64> {
        let (_, pooled) = self.hidden(image)?;
        Ok(self.head_bias[0] + self.head.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>())
    }

    fn input_grad(&self, image: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.score_and_grads(image)?.2)
    }
}
