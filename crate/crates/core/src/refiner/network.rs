//! Encoder, coarse-to-fine feature updates, decoder, heads and mask fusion.
//!
//! ```text
//! x = [Ip, Ie, Il]
//! f_0 = act(enc_0(x)), f_m = act(enc_m(f_{m-1}))          (stride 2 for m > 0)
//! u_{L-1} = f_{L-1}, u_m = fuu_m(f_m, u_{m+1})             (m = L-2 .. 0)
//! d_{L-1} = u_{L-1}, d_m = act(dec_m([up(d_{m+1}), u_m]))
//! M_k = sigmoid(head_k(d_0)), C = sigmoid(content(d_0))
//! F1 = M1 Ip + (1 - M1) Ie
//! F2 = M2 F1 + (1 - M2) Il
//! G  = M3 F2 + (1 - M3) C
//! ```

use crate::error::{check_dims, Error, Result};
use crate::model::Frame;
use crate::nn::{leaky_relu, leaky_relu_grad, sigmoid, ConvGrads, ConvLayer, FeatureMap};
use crate::refiner::fuu::{fuu_backward, fuu_forward, FuuCache};
use crate::refiner::weights::{RefinerWeights, INPUT_CHANNELS};

/// The three candidate right views.
#[derive(Debug, Clone)]
pub struct RefinerInputs {
    pub poly: FeatureMap,
    pub de: FeatureMap,
    pub dl: FeatureMap,
}

impl RefinerInputs {
    pub fn new(poly: FeatureMap, de: FeatureMap, dl: FeatureMap) -> Result<Self> {
        for f in [&poly, &de, &dl] {
            if f.channels() != 3 {
                return Err(Error::ChannelPlan(format!(
                    "refiner inputs must be RGB, got {} channels",
                    f.channels()
                )));
            }
            if f.spatial() != poly.spatial() {
                return Err(Error::DimensionMismatch {
                    expected: (poly.width(), poly.height()),
                    actual: (f.width(), f.height()),
                });
            }
        }
        Ok(RefinerInputs { poly, de, dl })
    }

    pub fn from_frames(poly: &Frame, de: &Frame, dl: &Frame) -> Result<Self> {
        check_dims(poly.dims(), de.dims())?;
        check_dims(poly.dims(), dl.dims())?;
        Self::new(
            FeatureMap::from_frame(poly),
            FeatureMap::from_frame(de),
            FeatureMap::from_frame(dl),
        )
    }
}

/// Replaces head outputs by fixed values.
#[derive(Debug, Clone, Default)]
pub struct HeadOverride {
    pub masks: [Option<f64>; 3],
    pub content: Option<FeatureMap>,
}

#[derive(Debug, Clone)]
pub struct RefinerOutput {
    /// Single-channel `M1`, `M2`, `M3`.
    pub masks: [FeatureMap; 3],
    pub content: FeatureMap,
    pub fused_first: FeatureMap,
    pub fused_second: FeatureMap,
    pub output: FeatureMap,
}

impl RefinerOutput {
    pub fn output_frame(&self) -> Result<Frame> {
        self.output.to_frame()
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: FeatureMap,
    enc_pre: Vec<FeatureMap>,
    enc_out: Vec<FeatureMap>,
    fuu: Vec<FuuCache>,
    updated: Vec<FeatureMap>,
    dec_in: Vec<FeatureMap>,
    dec_pre: Vec<FeatureMap>,
    dec_out: FeatureMap,
    overrides: HeadOverride,
}

pub fn forward(
    w: &RefinerWeights,
    inputs: &RefinerInputs,
    overrides: &HeadOverride,
) -> Result<(RefinerOutput, ForwardCache)> {
    let levels = w.arch.levels();
    let x = FeatureMap::concat(&[&inputs.poly, &inputs.de, &inputs.dl])?;
    debug_assert_eq!(x.channels(), INPUT_CHANNELS);

    let mut enc_pre = Vec::with_capacity(levels);
    let mut enc_out: Vec<FeatureMap> = Vec::with_capacity(levels);
    for (m, layer) in w.encoder.iter().enumerate() {
        let pre = layer.forward(if m == 0 { &x } else { &enc_out[m - 1] })?;
        enc_out.push(pre.map(leaky_relu));
        enc_pre.push(pre);
    }

    let mut updated = vec![FeatureMap::zeros(1, 1, 1); levels];
    updated[levels - 1] = enc_out[levels - 1].clone();
    let mut fuu = Vec::with_capacity(levels - 1);
    for m in (0..levels - 1).rev() {
        let (u, cache) = fuu_forward(&enc_out[m], &updated[m + 1], &w.fuu[m])?;
        updated[m] = u;
        fuu.push(cache);
    }
    // Stored finest first.
    fuu.reverse();

    let mut dec_in = vec![FeatureMap::zeros(1, 1, 1); levels - 1];
    let mut dec_pre = vec![FeatureMap::zeros(1, 1, 1); levels - 1];
    let mut dec = updated[levels - 1].clone();
    for m in (0..levels - 1).rev() {
        let (h, wd) = updated[m].spatial();
        let cat = FeatureMap::concat(&[&dec.upsample_nearest(h, wd), &updated[m]])?;
        let pre = w.decoder[m].forward(&cat)?;
        dec = pre.map(leaky_relu);
        dec_in[m] = cat;
        dec_pre[m] = pre;
    }

    let (h, wd) = x.spatial();
    let all_fixed = overrides.masks.iter().all(Option::is_some) && overrides.content.is_some();
    let mut heads = if all_fixed {
        Vec::new()
    } else {
        // Column order: three masks, then content.
        let (m0, rest) = stacked_heads(w)?.forward(&dec)?.split_channels(1);
        let (m1, rest) = rest.split_channels(1);
        let (m2, content) = rest.split_channels(1);
        vec![m0, m1, m2, content]
    };
    let mut masks = Vec::with_capacity(3);
    for k in 0..3 {
        masks.push(match overrides.masks[k] {
            Some(v) => FeatureMap::filled(1, h, wd, v),
            None => heads[k].map(sigmoid),
        });
    }
    let masks: [FeatureMap; 3] = masks.try_into().expect("three heads");
    let content = match &overrides.content {
        Some(c) => {
            if c.channels() != 3 || c.spatial() != (h, wd) {
                return Err(Error::DimensionMismatch {
                    expected: (wd, h),
                    actual: (c.width(), c.height()),
                });
            }
            c.clone()
        }
        None => heads.pop().expect("content head").map(sigmoid),
    };

    let fused_first = blend(&masks[0], &inputs.poly, &inputs.de);
    let fused_second = blend(&masks[1], &fused_first, &inputs.dl);
    let output = blend(&masks[2], &fused_second, &content);

    Ok((
        RefinerOutput {
            masks,
            content,
            fused_first,
            fused_second,
            output,
        },
        ForwardCache {
            input: x,
            enc_pre,
            enc_out,
            fuu,
            updated,
            dec_in,
            dec_pre,
            dec_out: dec,
            overrides: overrides.clone(),
        },
    ))
}

/// The mask heads and the content head all read the finest decoder
/// feature, so they run as one convolution.
fn stacked_heads(w: &RefinerWeights) -> Result<ConvLayer> {
    ConvLayer::stack(&[&w.mask_heads[0], &w.mask_heads[1], &w.mask_heads[2], &w.content_head])
}

/// `m * a + (1 - m) * b` with a one-channel `m` broadcast over channels.
fn blend(m: &FeatureMap, a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
    let n = m.plane_len();
    let mut out = Vec::with_capacity(a.data().len());
    for c in 0..a.channels() {
        let (ac, bc) = (a.channel(c), b.channel(c));
        for i in 0..n {
            let mv = m.data()[i];
            out.push(mv * ac[i] + (1.0 - mv) * bc[i]);
        }
    }
    FeatureMap::from_vec(a.channels(), a.height(), a.width(), out)
}

/// Full forward on frames; returns masks, content and the fused view.
pub fn refiner_forward(poly: &Frame, de: &Frame, dl: &Frame, w: &RefinerWeights) -> Result<RefinerOutput> {
    let inputs = RefinerInputs::from_frames(poly, de, dl)?;
    Ok(forward(w, &inputs, &HeadOverride::default())?.0)
}

/// Gradients of a scalar objective through the refiner.
#[derive(Debug, Clone)]
pub struct RefinerGrads {
    pub weights: RefinerWeights,
    pub poly: FeatureMap,
    pub de: FeatureMap,
    pub dl: FeatureMap,
}

fn with_grads(layer: &ConvLayer, g: ConvGrads) -> (ConvLayer, FeatureMap) {
    let mut l = layer.clone();
    l.weight = g.weight;
    l.bias = g.bias;
    (l, g.input)
}

/// Backpropagates `grad_output` (gradient with respect to the fused view).
pub fn backward(
    w: &RefinerWeights,
    inputs: &RefinerInputs,
    out: &RefinerOutput,
    cache: &ForwardCache,
    grad_output: &FeatureMap,
) -> Result<RefinerGrads> {
    if !grad_output.same_shape(&out.output) {
        return Err(Error::DimensionMismatch {
            expected: (out.output.width(), out.output.height()),
            actual: (grad_output.width(), grad_output.height()),
        });
    }
    let levels = w.arch.levels();
    let (h, wd) = out.output.spatial();
    let n = h * wd;
    let [m1, m2, m3] = [&out.masks[0], &out.masks[1], &out.masks[2]];

    // Fusion.
    let mut g_m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut g_c = vec![0.0; 3 * n];
    let mut g_f2 = vec![0.0; 3 * n];
    let mut g_f1 = vec![0.0; 3 * n];
    let mut g_p = vec![0.0; 3 * n];
    let mut g_e = vec![0.0; 3 * n];
    let mut g_l = vec![0.0; 3 * n];
    for c in 0..3 {
        let g = grad_output.channel(c);
        let (f1, f2, cc) = (
            out.fused_first.channel(c),
            out.fused_second.channel(c),
            out.content.channel(c),
        );
        let (p, e, l) = (inputs.poly.channel(c), inputs.de.channel(c), inputs.dl.channel(c));
        for i in 0..n {
            let k = c * n + i;
            let (a, b, d) = (m1.data()[i], m2.data()[i], m3.data()[i]);
            g_m[2][i] += g[i] * (f2[i] - cc[i]);
            g_f2[k] = d * g[i];
            g_c[k] = (1.0 - d) * g[i];
            g_m[1][i] += g_f2[k] * (f1[i] - l[i]);
            g_f1[k] = b * g_f2[k];
            g_l[k] = (1.0 - b) * g_f2[k];
            g_m[0][i] += g_f1[k] * (p[i] - e[i]);
            g_p[k] = a * g_f1[k];
            g_e[k] = (1.0 - a) * g_f1[k];
        }
    }

    let mut grads = RefinerWeights::zeros(&w.arch)?;

    // Heads.
    let dec0 = &cache.dec_out;
    let mut g_dec = FeatureMap::zeros(dec0.channels(), h, wd);
    let fixed = &cache.overrides;
    if !(fixed.masks.iter().all(Option::is_some) && fixed.content.is_some()) {
        // Overridden heads get a zero output gradient, hence zero grads.
        let mut pre = vec![0.0; 6 * n];
        for k in 0..3 {
            if fixed.masks[k].is_none() {
                let mk = out.masks[k].data();
                for i in 0..n {
                    pre[k * n + i] = g_m[k][i] * mk[i] * (1.0 - mk[i]);
                }
            }
        }
        if fixed.content.is_none() {
            let cv = out.content.data();
            for i in 0..3 * n {
                pre[3 * n + i] = g_c[i] * cv[i] * (1.0 - cv[i]);
            }
        }
        let mut all = stacked_heads(w)?;
        let g = all.backward(dec0, &FeatureMap::from_vec(6, h, wd, pre))?;
        all.weight = g.weight;
        all.bias = g.bias;
        let [m0, m1, m2, content]: [ConvLayer; 4] = all
            .unstack(&[&w.mask_heads[0], &w.mask_heads[1], &w.mask_heads[2], &w.content_head])
            .try_into()
            .expect("four heads");
        grads.mask_heads = [m0, m1, m2];
        grads.content_head = content;
        g_dec = g.input;
    }

    // Decoder, finest to coarsest.
    let mut g_updated: Vec<Option<FeatureMap>> = vec![None; levels];
    for m in 0..levels - 1 {
        let pre = &cache.dec_pre[m];
        let g_pre = g_dec.zip_map(pre, |g, p| g * leaky_relu_grad(p));
        let (layer, g_in) = with_grads(&w.decoder[m], w.decoder[m].backward(&cache.dec_in[m], &g_pre)?);
        grads.decoder[m] = layer;
        let coarse = &cache.updated[m + 1];
        let (g_up, g_skip) = g_in.split_channels(coarse.channels());
        accumulate(&mut g_updated[m], g_skip);
        g_dec = FeatureMap::upsample_nearest_backward(&g_up, coarse.height(), coarse.width());
    }
    accumulate(&mut g_updated[levels - 1], g_dec);

    // Feature updates, finest first: u_m only feeds the unit one level finer.
    let mut g_enc: Vec<Option<FeatureMap>> = vec![None; levels];
    for m in 0..levels - 1 {
        let g_u = g_updated[m].take().expect("set by the decoder pass");
        let coarse = &cache.updated[m + 1];
        let fg = fuu_backward(&cache.fuu[m], &w.fuu[m], &g_u, coarse.spatial())?;
        grads.fuu[m] = fg.weights;
        accumulate(&mut g_enc[m], fg.fine);
        accumulate(&mut g_updated[m + 1], fg.coarse);
    }
    let top = g_updated[levels - 1].take().expect("set above");
    accumulate(&mut g_enc[levels - 1], top);

    // Encoder, coarsest first.
    let mut g_x = None;
    for m in (0..levels).rev() {
        let g_f = g_enc[m].take().expect("every level receives a gradient");
        let g_pre = g_f.zip_map(&cache.enc_pre[m], |g, p| g * leaky_relu_grad(p));
        let src = if m == 0 { &cache.input } else { &cache.enc_out[m - 1] };
        let (layer, g_in) = with_grads(&w.encoder[m], w.encoder[m].backward(src, &g_pre)?);
        grads.encoder[m] = layer;
        if m == 0 {
            g_x = Some(g_in);
        } else {
            accumulate(&mut g_enc[m - 1], g_in);
        }
    }
    let g_x = g_x.expect("encoder has a first level");
    let (gx_p, rest) = g_x.split_channels(3);
    let (gx_e, gx_l) = rest.split_channels(3);

    let mut poly = FeatureMap::from_vec(3, h, wd, g_p);
    poly.add_assign(&gx_p);
    let mut de = FeatureMap::from_vec(3, h, wd, g_e);
    de.add_assign(&gx_e);
    let mut dl = FeatureMap::from_vec(3, h, wd, g_l);
    dl.add_assign(&gx_l);
    Ok(RefinerGrads {
        weights: grads,
        poly,
        de,
        dl,
    })
}

fn accumulate(slot: &mut Option<FeatureMap>, g: FeatureMap) {
    match slot {
        Some(s) => s.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refiner::weights::RefinerArch;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn arch() -> RefinerArch {
        RefinerArch::new(vec![3, 4, 5], 3).unwrap()
    }

    fn image(h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = seeded_rng(seed);
        FeatureMap::new(3, h, w, (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    fn inputs(h: usize, w: usize) -> RefinerInputs {
        RefinerInputs::new(image(h, w, 1), image(h, w, 2), image(h, w, 3)).unwrap()
    }

    #[test]
    fn masks_are_strictly_inside_unit_interval() {
        let w = RefinerWeights::random(&arch(), 4).unwrap();
        let (out, _) = forward(&w, &inputs(7, 9), &HeadOverride::default()).unwrap();
        for m in &out.masks {
            assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert_eq!(out.output.spatial(), (7, 9));
    }

    #[test]
    fn all_ones_masks_pass_poly_through() {
        let w = RefinerWeights::random(&arch(), 4).unwrap();
        let x = inputs(8, 8);
        let o = HeadOverride {
            masks: [Some(1.0); 3],
            content: None,
        };
        let (out, _) = forward(&w, &x, &o).unwrap();
        assert_eq!(out.output, x.poly);
    }

    #[test]
    fn selector_weights_saturate_masks() {
        let w = RefinerWeights::selector(&arch(), [-1000.0, 1000.0, 1000.0]).unwrap();
        let x = inputs(6, 6);
        let (out, _) = forward(&w, &x, &HeadOverride::default()).unwrap();
        assert_eq!(out.output, x.de);
        assert!(out.content.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let w = RefinerWeights::random(&arch(), 4).unwrap();
        let x = inputs(8, 8);
        let (out, cache) = forward(&w, &x, &HeadOverride::default()).unwrap();
        let g = backward(&w, &x, &out, &cache, &FeatureMap::zeros(3, 8, 8)).unwrap();
        assert!(g.weights.to_flat().iter().all(|&v| v == 0.0));
        assert!(g.poly.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_mask_gradient_wrt_poly_is_mask_product() {
        let w = RefinerWeights::zeros(&arch()).unwrap();
        let x = inputs(4, 4);
        let o = HeadOverride {
            masks: [Some(0.3), Some(0.6), Some(0.9)],
            content: Some(image(4, 4, 9)),
        };
        let (out, cache) = forward(&w, &x, &o).unwrap();
        let g = backward(&w, &x, &out, &cache, &FeatureMap::filled(3, 4, 4, 1.0)).unwrap();
        // Zero encoder weights contribute nothing through the input path.
        for v in g.poly.data() {
            assert!((v - 0.3 * 0.6 * 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let w = RefinerWeights::random(&arch(), 11).unwrap();
        let x = inputs(5, 6);
        let g_out = image(5, 6, 12);
        let objective = |x: &RefinerInputs| -> f64 {
            let (o, _) = forward(&w, x, &HeadOverride::default()).unwrap();
            o.output.data().iter().zip(g_out.data()).map(|(a, b)| a * b).sum()
        };
        let (out, cache) = forward(&w, &x, &HeadOverride::default()).unwrap();
        let g = backward(&w, &x, &out, &cache, &g_out).unwrap();
        let eps = 1e-6;
        for i in (0..x.de.data().len()).step_by(7) {
            let mut p = x.clone();
            p.de.data_mut()[i] += eps;
            let mut m = x.clone();
            m.de.data_mut()[i] -= eps;
            let fd = (objective(&p) - objective(&m)) / (2.0 * eps);
            assert!((fd - g.de.data()[i]).abs() < 1e-7, "{fd} vs {}", g.de.data()[i]);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(RefinerInputs::new(image(4, 4, 1), image(4, 5, 1), image(4, 4, 1)).is_err());
    }
}
