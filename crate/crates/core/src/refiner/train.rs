//! Mini-batch Adam training of the refiner, with an optional critic trained
//! in alternation.
//!
//! Per sample the generator objective is
//! `l1 * content + l2 * perceptual + l3 * (D(fake) - D(real))`, averaged over
//! the batch. The critic takes the opposite step on the score gap. Sample
//! gradients are computed in parallel and summed in sample order.

use rand::seq::SliceRandom;

use crate::config::{LossWeights, PipelineConfig, TrainSettings};
use crate::error::{check_dims, Error, Result};
use crate::losses::{
    content_loss, content_loss_grad, perceptual_loss, perceptual_loss_grad, ConvPyramidExtractor,
    Critic, FeatureExtractor, ToyDiscriminator,
};
use crate::model::{Frame, OcclusionMask};
use crate::nn::FeatureMap;
use crate::par;
use crate::refiner::adam::Adam;
use crate::refiner::network::{backward, forward, HeadOverride, RefinerInputs};
use crate::refiner::weights::{RefinerArch, RefinerWeights};
use crate::rng::seeded_rng;

/// Candidate views, occlusion mask and ground-truth right view.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub inputs: RefinerInputs,
    pub mask: OcclusionMask,
    pub target: FeatureMap,
}

impl TrainingSample {
    pub fn from_frames(poly: &Frame, de: &Frame, dl: &Frame, mask: &OcclusionMask, target: &Frame) -> Result<Self> {
        check_dims(poly.dims(), mask.dims())?;
        check_dims(poly.dims(), target.dims())?;
        Ok(TrainingSample {
            inputs: RefinerInputs::from_frames(poly, de, dl)?,
            mask: mask.clone(),
            target: FeatureMap::from_frame(target),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossRecord {
    pub total: f64,
    pub content: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl LossRecord {
    fn add(&mut self, o: &LossRecord) {
        self.total += o.total;
        self.content += o.content;
        self.perceptual += o.perceptual;
        self.adversarial += o.adversarial;
    }

    fn scale(&mut self, s: f64) {
        self.total *= s;
        self.content *= s;
        self.perceptual *= s;
        self.adversarial *= s;
    }
}

/// What a sample's loss is measured with.
pub struct Objective<'a> {
    pub weights: LossWeights,
    pub extractor: &'a dyn FeatureExtractor,
    pub critic: Option<&'a ToyDiscriminator>,
}

/// Loss of one sample, forward pass only.
pub fn sample_loss(w: &RefinerWeights, sample: &TrainingSample, obj: &Objective) -> Result<LossRecord> {
    let (out, _) = forward(w, &sample.inputs, &HeadOverride::default())?;
    loss_of(&out.output, sample, obj)
}

fn loss_of(pred: &FeatureMap, sample: &TrainingSample, obj: &Objective) -> Result<LossRecord> {
    let content = content_loss(pred, &sample.target, &sample.mask, obj.weights.alpha)?;
    let perceptual = perceptual_loss(pred, &sample.target, obj.extractor)?;
    let adversarial = match obj.critic {
        Some(d) => d.score(pred)? - d.score(&sample.target)?,
        None => 0.0,
    };
    let lw = &obj.weights;
    Ok(LossRecord {
        total: lw.content * content + lw.perceptual * perceptual + lw.adversarial * adversarial,
        content,
        perceptual,
        adversarial,
    })
}

/// Loss of one sample and its gradient with respect to every refiner
/// parameter. Also returns the generated view.
pub fn sample_loss_and_grad(
    w: &RefinerWeights,
    sample: &TrainingSample,
    obj: &Objective,
) -> Result<(LossRecord, RefinerWeights, FeatureMap)> {
    let (out, cache) = forward(w, &sample.inputs, &HeadOverride::default())?;
    let pred = &out.output;
    let record = loss_of(pred, sample, obj)?;
    let lw = &obj.weights;
    let mut g = content_loss_grad(pred, &sample.target, &sample.mask, lw.alpha)?.map(|v| v * lw.content);
    let gp = perceptual_loss_grad(pred, &sample.target, obj.extractor)?;
    g.add_assign(&gp.map(|v| v * lw.perceptual));
    if let Some(d) = obj.critic {
        g.add_assign(&d.input_grad(pred)?.map(|v| v * lw.adversarial));
    }
    let grads = backward(w, &sample.inputs, &out, &cache, &g)?;
    Ok((record, grads.weights, out.output))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: RefinerWeights,
    pub discriminator: Option<ToyDiscriminator>,
    /// Batch-mean losses measured before each step.
    pub trace: Vec<LossRecord>,
    /// Dataset-mean content loss before the first and after the last step.
    pub initial_content: f64,
    pub final_content: f64,
}

fn check_dataset(dataset: &[TrainingSample]) -> Result<()> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Empty("training set is empty".into()))?;
    for s in dataset {
        if s.inputs.poly.spatial() != first.inputs.poly.spatial() {
            return Err(Error::DimensionMismatch {
                expected: (first.inputs.poly.width(), first.inputs.poly.height()),
                actual: (s.inputs.poly.width(), s.inputs.poly.height()),
            });
        }
    }
    Ok(())
}

fn mean_content(w: &RefinerWeights, dataset: &[TrainingSample], alpha: f64) -> Result<f64> {
    let values = par::map_slice(dataset, |s| -> Result<f64> {
        let (out, _) = forward(w, &s.inputs, &HeadOverride::default())?;
        content_loss(&out.output, &s.target, &s.mask, alpha)
    });
    let mut sum = 0.0;
    for v in values {
        sum += v?;
    }
    Ok(sum / dataset.len() as f64)
}

/// Trains `init` on `dataset`. `seed` drives batch order and the critic's
/// initialization.
pub fn train_refiner_from(
    dataset: &[TrainingSample],
    init: RefinerWeights,
    settings: &TrainSettings,
    loss: &LossWeights,
    extractor: &dyn FeatureExtractor,
    seed: u64,
) -> Result<TrainOutcome> {
    check_dataset(dataset)?;
    settings.validate()?;
    init.validate()?;
    let mut weights = init;
    let mut critic = if settings.adversarial && loss.adversarial != 0.0 {
        Some(ToyDiscriminator::new(8, seed ^ 0xd15c))
    } else {
        None
    };
    let mut opt_g = Adam::new(settings.learning_rate, settings.beta1, settings.beta2);
    let mut opt_d = Adam::new(settings.learning_rate, settings.beta1, settings.beta2);
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = Vec::new();
    let batch = settings.batch_size.min(dataset.len());
    let initial_content = mean_content(&weights, dataset, loss.alpha)?;
    let mut trace = Vec::with_capacity(settings.steps);

    for step in 0..settings.steps {
        if order.len() < batch {
            let mut fresh: Vec<usize> = (0..dataset.len()).collect();
            fresh.shuffle(&mut rng);
            order.extend(fresh);
        }
        let picked: Vec<usize> = order.drain(..batch).collect();
        let obj = Objective {
            weights: *loss,
            extractor,
            critic: critic.as_ref(),
        };
        let per_sample = par::map_slice(&picked, |&i| sample_loss_and_grad(&weights, &dataset[i], &obj));

        let mut record = LossRecord::default();
        let mut grad = RefinerWeights::zeros(&weights.arch)?;
        let mut fakes = Vec::with_capacity(batch);
        for r in per_sample {
            let (rec, g, fake) = r?;
            record.add(&rec);
            grad.add_scaled(&g, 1.0);
            fakes.push(fake);
        }
        let inv = 1.0 / batch as f64;
        record.scale(inv);
        if !record.total.is_finite() {
            return Err(Error::Numeric(format!("loss became {} at step {step}", record.total)));
        }
        trace.push(record);
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= inv);
        }
        opt_g.step(weights.tensors_mut(), grad.tensors());

        if let Some(d) = critic.as_mut() {
            // Ascend the score gap: raise D on generated views, lower it on targets.
            let snapshot = d.clone();
            let parts = par::map_range(batch, |k| -> Result<(ToyDiscriminator, ToyDiscriminator)> {
                let (_, gf, _) = snapshot.score_and_grads(&fakes[k])?;
                let (_, gr, _) = snapshot.score_and_grads(&dataset[picked[k]].target)?;
                Ok((gf, gr))
            });
            let mut dg = snapshot.zeros_like();
            for p in parts {
                let (gf, gr) = p?;
                for ((acc, f), r) in dg.tensors_mut().into_iter().zip(gf.tensors()).zip(gr.tensors()) {
                    for i in 0..acc.len() {
                        acc[i] -= (f[i] - r[i]) * inv;
                    }
                }
            }
            opt_d.step(d.tensors_mut(), dg.tensors());
        }
    }

    let final_content = mean_content(&weights, dataset, loss.alpha)?;
    Ok(TrainOutcome {
        weights,
        discriminator: critic,
        trace,
        initial_content,
        final_content,
    })
}

/// Trains a freshly initialized refiner with the configured optimizer and
/// loss weights and the bundled feature extractor.
pub fn train_refiner(
    dataset: &[TrainingSample],
    arch: &RefinerArch,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    check_dataset(dataset)?;
    let init = RefinerWeights::random(arch, seed)?;
    let extractor = ConvPyramidExtractor::default();
    train_refiner_from(dataset, init, &cfg.train, &cfg.loss, &extractor, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::IdentityExtractor;
    use rand::Rng;

    fn sample(seed: u64, h: usize, w: usize) -> TrainingSample {
        let mut rng = seeded_rng(seed);
        let mut img = || {
            FeatureMap::new(3, h, w, (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        };
        let (p, e, l) = (img(), img(), img());
        TrainingSample {
            target: p.clone(),
            inputs: RefinerInputs::new(p, e, l).unwrap(),
            mask: OcclusionMask::from_fn(w, h, |x, _| x < 2).unwrap(),
        }
    }

    fn settings(steps: usize) -> TrainSettings {
        TrainSettings {
            steps,
            ..TrainSettings::default()
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let arch = RefinerArch::new(vec![2, 3], 3).unwrap();
        let r = train_refiner(&[], &arch, &PipelineConfig::default(), 0);
        assert!(matches!(r, Err(Error::Empty(_))));
    }

    #[test]
    fn reachable_target_stays_near_zero() {
        let arch = RefinerArch::new(vec![2, 3], 3).unwrap();
        let init = RefinerWeights::selector(&arch, [30.0, 30.0, 30.0]).unwrap();
        let data: Vec<_> = (0..3).map(|i| sample(i, 6, 6)).collect();
        let lw = LossWeights {
            adversarial: 0.0,
            ..LossWeights::default()
        };
        let out = train_refiner_from(&data, init, &settings(5), &lw, &IdentityExtractor, 1).unwrap();
        assert!(out.trace[0].total < 1e-9);
        for pair in out.trace.windows(2) {
            assert!(pair[1].total <= pair[0].total + 1e-12);
        }
    }

    #[test]
    fn same_seed_gives_identical_trace() {
        let arch = RefinerArch::new(vec![2, 3], 3).unwrap();
        let data: Vec<_> = (0..5).map(|i| sample(i, 6, 5)).collect();
        let cfg = PipelineConfig {
            train: settings(4),
            ..PipelineConfig::default()
        };
        let a = train_refiner(&data, &arch, &cfg, 7).unwrap();
        let b = train_refiner(&data, &arch, &cfg, 7).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.weights, b.weights);
        assert!(a.discriminator.is_some());
    }
}
