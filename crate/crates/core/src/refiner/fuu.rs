//! Feature update unit: gated merge of a level's encoder feature with the
//! already-updated coarser feature.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, ConvLayer, FeatureMap};
use crate::refiner::weights::FuuWeights;

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct FuuCache {
    pub(crate) input: FeatureMap,
    pub(crate) z: FeatureMap,
    pub(crate) q: FeatureMap,
    pub(crate) r: FeatureMap,
}

pub(crate) fn fuu_forward(
    fine: &FeatureMap,
    coarse: &FeatureMap,
    w: &FuuWeights,
) -> Result<(FeatureMap, FuuCache)> {
    let (h, wd) = fine.spatial();
    if coarse.spatial() != (h.div_ceil(2), wd.div_ceil(2)) {
        return Err(Error::DimensionMismatch {
            expected: (wd.div_ceil(2), h.div_ceil(2)),
            actual: (coarse.width(), coarse.height()),
        });
    }
    let expected_in = fine.channels() + coarse.channels();
    for layer in [&w.gate, &w.high, &w.low] {
        if layer.in_channels != expected_in || layer.out_channels != fine.channels() {
            return Err(Error::ChannelPlan(format!(
                "update unit expects {} -> {}, features give {} -> {}",
                layer.in_channels,
                layer.out_channels,
                expected_in,
                fine.channels()
            )));
        }
    }
    let up = coarse.upsample_nearest(h, wd);
    let input = FeatureMap::concat(&[fine, &up])?;
    let c = fine.channels();
    let (z, rest) = stacked(w)?.forward(&input)?.split_channels(c);
    let (q, r) = rest.split_channels(c);
    let (z, q, r) = (z.map(sigmoid), q.map(f64::tanh), r.map(f64::tanh));
    let data = z
        .data()
        .iter()
        .zip(q.data())
        .zip(r.data())
        .map(|((&z, &q), &r)| q * z + (1.0 - z) * r)
        .collect();
    let out = FeatureMap::from_vec(fine.channels(), h, wd, data);
    Ok((out, FuuCache { input, z, q, r }))
}

/// `q * z + (1 - z) * r` with `z`, `q`, `r` computed from `[fine, up(coarse)]`.
pub fn fuu_update(fine: &FeatureMap, coarse: &FeatureMap, w: &FuuWeights) -> Result<FeatureMap> {
    Ok(fuu_forward(fine, coarse, w)?.0)
}

/// Gate, high and low convolutions share their input, so they run as one.
fn stacked(w: &FuuWeights) -> Result<ConvLayer> {
    ConvLayer::stack(&[&w.gate, &w.high, &w.low])
}

pub(crate) struct FuuGrads {
    pub fine: FeatureMap,
    pub coarse: FeatureMap,
    pub weights: FuuWeights,
}

pub(crate) fn fuu_backward(
    cache: &FuuCache,
    w: &FuuWeights,
    grad_out: &FeatureMap,
    coarse_dims: (usize, usize),
) -> Result<FuuGrads> {
    let FuuCache { input, z, q, r } = cache;
    let n = grad_out.data().len();
    let mut gz = Vec::with_capacity(3 * n);
    let mut gq = Vec::with_capacity(n);
    let mut gr = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad_out.data()[i];
        let (z, q, r) = (z.data()[i], q.data()[i], r.data()[i]);
        gz.push(g * (q - r) * z * (1.0 - z));
        gq.push(g * z * (1.0 - q * q));
        gr.push(g * (1.0 - z) * (1.0 - r * r));
    }
    let (c, h, wd) = (grad_out.channels(), grad_out.height(), grad_out.width());
    gz.extend(gq);
    gz.extend(gr);
    let mut all = stacked(w)?;
    let g = all.backward(input, &FeatureMap::from_vec(3 * c, h, wd, gz))?;
    let (fine, up) = g.input.split_channels(c);
    let coarse = FeatureMap::upsample_nearest_backward(&up, coarse_dims.0, coarse_dims.1);
    all.weight = g.weight;
    all.bias = g.bias;
    let [gate, high, low]: [ConvLayer; 3] = all
        .unstack(&[&w.gate, &w.high, &w.low])
        .try_into()
        .expect("three layers");
    Ok(FuuGrads {
        fine,
        coarse,
        weights: FuuWeights { gate, high, low },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn random_map(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = seeded_rng(seed);
        FeatureMap::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_unit(fine: usize, coarse: usize, seed: u64) -> FuuWeights {
        let mut rng = seeded_rng(seed);
        let mut mk = || {
            let mut l = ConvLayer::random(fine + coarse, fine, 3, 1, &mut rng);
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            l
        };
        FuuWeights {
            gate: mk(),
            high: mk(),
            low: mk(),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let w = FuuWeights {
            gate: ConvLayer::zeros(5, 3, 3, 1),
            high: ConvLayer::zeros(5, 3, 3, 1),
            low: ConvLayer::zeros(5, 3, 3, 1),
        };
        let out = fuu_update(&random_map(3, 4, 4, 1), &random_map(2, 2, 2, 2), &w).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_candidates_ignore_the_gate() {
        let mut w = random_unit(3, 2, 4);
        w.low = w.high.clone();
        let fine = random_map(3, 5, 4, 1);
        let coarse = random_map(2, 3, 2, 2);
        let out = fuu_update(&fine, &coarse, &w).unwrap();
        let q = w
            .high
            .forward(&FeatureMap::concat(&[&fine, &coarse.upsample_nearest(5, 4)]).unwrap())
            .unwrap()
            .map(f64::tanh);
        for (a, b) in out.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let w = random_unit(3, 2, 4);
        assert!(fuu_update(&random_map(3, 4, 4, 1), &random_map(2, 3, 3, 1), &w).is_err());
        assert!(fuu_update(&random_map(3, 4, 4, 1), &random_map(4, 2, 2, 1), &w).is_err());
    }

    #[test]
    fn backward_matches_finite_differences_on_inputs() {
        let w = random_unit(2, 3, 9);
        let fine = random_map(2, 4, 4, 3);
        let coarse = random_map(3, 2, 2, 5);
        let g = random_map(2, 4, 4, 7);
        let objective = |f: &FeatureMap, c: &FeatureMap| -> f64 {
            let out = fuu_update(f, c, &w).unwrap();
            out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = fuu_forward(&fine, &coarse, &w).unwrap();
        let grads = fuu_backward(&cache, &w, &g, (2, 2)).unwrap();
        let eps = 1e-6;
        for i in 0..coarse.data().len() {
            let mut p = coarse.clone();
            p.data_mut()[i] += eps;
            let mut m = coarse.clone();
            m.data_mut()[i] -= eps;
            let fd = (objective(&fine, &p) - objective(&fine, &m)) / (2.0 * eps);
            assert!((fd - grads.coarse.data()[i]).abs() < 1e-7);
        }
        for i in 0..fine.data().len() {
            let mut p = fine.clone();
            p.data_mut()[i] += eps;
            let mut m = fine.clone();
            m.data_mut()[i] -= eps;
            let fd = (objective(&p, &coarse) - objective(&m, &coarse)) / (2.0 * eps);
            assert!((fd - grads.fine.data()[i]).abs() < 1e-7);
        }
    }
}
