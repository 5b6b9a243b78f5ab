use proptest::prelude::*;
use stereo_core::canny::canny_edges;
use stereo_core::config::CannyParams;
use stereo_core::disparity::{expand_disparity, ExpansionParams};
use stereo_core::losses::{content_loss, perceptual_loss, total_loss, IdentityExtractor};
use stereo_core::metrics::{mae, psnr, ssim};
use stereo_core::model::{DisparityMap, EdgeMap, Frame, OcclusionMask};
use stereo_core::nn::FeatureMap;
use stereo_core::refiner::{
    forward, load_weights, save_weights, HeadOverride, RefinerArch, RefinerInputs, RefinerWeights,
};
use stereo_core::warp::forward_warp;

const W: usize = 12;
const H: usize = 9;

fn frame_strategy(w: usize, h: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(0.0f32..=1.0, 3 * w * h).prop_map(move |v| Frame::new(w, h, v).unwrap())
}

fn disparity_strategy(w: usize, h: usize) -> impl Strategy<Value = DisparityMap> {
    prop::collection::vec(prop::sample::select(vec![0.0f32, 1.0, 2.5, 4.0, 7.0, 11.0]), w * h)
        .prop_map(move |v| DisparityMap::new(w, h, v).unwrap())
}

fn edges_strategy(w: usize, h: usize) -> impl Strategy<Value = EdgeMap> {
    prop::collection::vec(any::<bool>(), w * h).prop_map(move |v| EdgeMap::new(w, h, v).unwrap())
}

fn mirror(f: &Frame) -> Frame {
    let w = f.width();
    Frame::from_fn(w, f.height(), |x, y| f.pixel(w - 1 - x, y)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_only_copies_existing_left_neighbours(
        d in disparity_strategy(W, H), e in edges_strategy(W, H), k in 1usize..3, lambda in 0.5f32..8.0,
    ) {
        let out = expand_disparity(&d, &ExpansionParams::new(k, lambda), Some(&e)).unwrap();
        for (o, i) in out.values().iter().zip(d.values()) {
            prop_assert!(o == i || d.values().contains(o));
        }
    }

    #[test]
    fn threshold_above_every_jump_changes_nothing(
        d in disparity_strategy(W, H), e in edges_strategy(W, H), k in 1usize..3, extra in 0.0f32..5.0,
    ) {
        // The largest possible left-minus-right jump in the strategy is 11.
        let out = expand_disparity(&d, &ExpansionParams::new(k, 11.0 + extra), Some(&e)).unwrap();
        prop_assert_eq!(out, d);
    }

    #[test]
    fn empty_edges_leave_the_map_alone(d in disparity_strategy(W, H), k in 1usize..4) {
        let e = EdgeMap::empty(W, H).unwrap();
        prop_assert_eq!(expand_disparity(&d, &ExpansionParams::new(k, 1.0), Some(&e)).unwrap(), d);
    }

    #[test]
    fn warped_pixels_come_from_the_same_row(f in frame_strategy(W, H), d in disparity_strategy(W, H)) {
        let r = forward_warp(&f, &d).unwrap();
        for y in 0..H {
            for x in 0..W {
                if !r.mask.get(x, y) {
                    let px = r.warped.pixel(x, y);
                    prop_assert!((0..W).any(|s| f.pixel(s, y) == px));
                }
            }
        }
    }

    #[test]
    fn metrics_are_symmetric_and_mirror_invariant(a in frame_strategy(16, 12), b in frame_strategy(16, 12)) {
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let (ma, mb) = (mirror(&a), mirror(&b));
        prop_assert!((mae(&a, &b).unwrap() - mae(&ma, &mb).unwrap()).abs() < 1e-12);
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&ma, &mb).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&ma, &mb).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn content_loss_grows_with_alpha(a in frame_strategy(6, 5), b in frame_strategy(6, 5), bits in prop::collection::vec(any::<bool>(), 30)) {
        let (fa, fb) = (FeatureMap::from_frame(&a), FeatureMap::from_frame(&b));
        let m = OcclusionMask::new(6, 5, bits).unwrap();
        let lo = content_loss(&fa, &fb, &m, 1.0).unwrap();
        let hi = content_loss(&fa, &fb, &m, 10.0).unwrap();
        prop_assert!(lo >= 0.0 && hi >= lo);
        let plain = perceptual_loss(&fa, &fb, &IdentityExtractor).unwrap();
        let flipped = perceptual_loss(&fb, &fa, &IdentityExtractor).unwrap();
        prop_assert!((plain - flipped).abs() < 1e-15);
        let none = OcclusionMask::empty(6, 5).unwrap();
        prop_assert!((content_loss(&fa, &fb, &none, 10.0).unwrap() / 3.0 - plain).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0, s in -3.0f64..3.0) {
        let base = total_loss(x, y, z, 10.0, 2.0, 0.1);
        let scaled = total_loss(s * x, s * y, s * z, 10.0, 2.0, 0.1);
        prop_assert!((scaled - s * base).abs() < 1e-9);
    }

    #[test]
    fn fused_output_stays_in_the_candidate_hull(seed in 0u64..1000) {
        let arch = RefinerArch::new(vec![3, 4, 5], 3).unwrap();
        let w = RefinerWeights::random(&arch, seed).unwrap();
        let img = |k: u64| {
            use rand::Rng;
            let mut rng = stereo_core::rng::seeded_rng(seed * 7 + k);
            FeatureMap::new(3, 7, 9, (0..189).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        };
        let x = RefinerInputs::new(img(1), img(2), img(3)).unwrap();
        let (out, _) = forward(&w, &x, &HeadOverride::default()).unwrap();
        for m in &out.masks {
            prop_assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        for i in 0..out.output.data().len() {
            let c = [x.poly.data()[i], x.de.data()[i], x.dl.data()[i], out.content.data()[i]];
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = out.output.data()[i];
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}

#[test]
fn vertical_step_gives_one_band_of_edges() {
    let d = DisparityMap::from_fn(32, 32, |x, _| if x < 16 { 10.0 } else { 0.0 }).unwrap();
    let e = canny_edges(&d, &CannyParams { sigma: 1.0, ..CannyParams::default() }).unwrap();
    let cols: Vec<usize> = (0..32).filter(|&x| (0..32).any(|y| e.get(x, y))).collect();
    assert!(!cols.is_empty());
    assert!(cols.windows(2).all(|w| w[1] == w[0] + 1), "band not contiguous: {cols:?}");
    assert!(cols.iter().all(|&x| x.abs_diff(16) <= 3), "edges far from the step: {cols:?}");
    // Every row crosses the step.
    assert!((0..32).all(|y| cols.iter().any(|&x| e.get(x, y))));
}

#[test]
fn weights_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.mhfu");
    let w = RefinerWeights::random(&RefinerArch::new(vec![3, 5], 3).unwrap(), 9).unwrap();
    save_weights(&w, &path).unwrap();
    assert_eq!(load_weights(&path).unwrap(), w);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_weights(&path).is_err());
}
