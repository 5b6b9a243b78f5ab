//! Frame-directory driver: branch views, right-view synthesis per variant,
//! composites and reports.
//!
//! Input layout, frames paired by six-digit index:
//!
//! ```text
//! <in>/left/000000.png            (or .ppm)
//! <in>/disparity/000000.pfm       (or 16-bit .png with .scale sidecar)
//! <in>/depth/000000.pfm           (used when disparity/ is absent)
//! ```
//!
//! Output: `<out>/right/`, optionally `<out>/sbs/` and `<out>/anaglyph/`,
//! plus `report.txt` (deterministic) and `timing.txt`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::compose::{compose_anaglyph, compose_sbs};
use crate::config::PipelineConfig;
use crate::disparity::{depth_to_disparity, expand_disparity, ExpansionParams};
use crate::error::{check_dims, Error, Result};
use crate::inpaint::{fill_from_right, inpaint_fallback, inpaint_poly, load_external_inpaint};
use crate::io::disparity::{read_disparity, read_pfm_values};
use crate::io::frames::{indexed_path, list_indexed, read_frame, write_frame, FRAME_EXTENSIONS};
use crate::model::{validate_pair, DisparityMap, Frame, OcclusionMask};
use crate::par;
use crate::refiner::{load_weights, refiner_forward, RefinerWeights, TrainingSample};
use crate::rng::seeded_rng;
use crate::warp::{forward_warp, hole_stats, WarpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Polyline rasterization only.
    Poly,
    /// Warp, then external or diffusion hole fill.
    Dl,
    /// Disparity expansion, warp, fill from the background side.
    DlDe,
    /// All three branches merged by the refiner.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Poly, Variant::Dl, Variant::DlDe, Variant::Full];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Poly => "poly",
            Variant::Dl => "dl",
            Variant::DlDe => "dl+de",
            Variant::Full => "full",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly" => Ok(Variant::Poly),
            "dl" => Ok(Variant::Dl),
            "dl+de" | "dl-de" | "de" => Ok(Variant::DlDe),
            "full" => Ok(Variant::Full),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (poly, dl, dl+de, full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory of externally inpainted frames for the DL branch.
    pub external_dir: Option<PathBuf>,
    /// Also write side-by-side and anaglyph composites.
    pub composites: bool,
    /// Re-run hole filling with randomized hole pixels and fail if any
    /// output changes.
    pub poison_check: bool,
    /// Worker count; 0 uses every core.
    pub jobs: usize,
}

/// Warp result plus the candidate right view of each branch.
#[derive(Debug, Clone)]
pub struct BranchViews {
    pub warp: WarpResult,
    pub poly: Frame,
    pub de: Frame,
    pub dl: Frame,
}

/// Replaces every hole pixel by a random colour.
pub fn poison_holes(frame: &Frame, mask: &OcclusionMask, seed: u64) -> Result<Frame> {
    check_dims(frame.dims(), mask.dims())?;
    let mut rng = seeded_rng(seed);
    let mut data = frame.data().to_vec();
    for (i, &hole) in mask.bits().iter().enumerate() {
        if hole {
            for v in &mut data[3 * i..3 * i + 3] {
                *v = rng.gen_range(0.0..=1.0);
            }
        }
    }
    Frame::new(frame.width(), frame.height(), data)
}

/// Runs `fill` on the warped frame and, when checking, on a poisoned copy.
fn checked_fill(
    warp: &WarpResult,
    poison: Option<u64>,
    what: &str,
    fill: impl Fn(&Frame) -> Result<Frame>,
) -> Result<Frame> {
    let out = fill(&warp.warped)?;
    if let Some(seed) = poison {
        let poisoned = poison_holes(&warp.warped, &warp.mask, seed)?;
        if fill(&poisoned)? != out {
            return Err(Error::Numeric(format!("{what} output depends on occluded pixels")));
        }
    }
    Ok(out)
}

/// Keeps warped pixels and takes holes from `fill`.
fn composite_holes(warp: &WarpResult, fill: &Frame) -> Result<Frame> {
    check_dims(warp.warped.dims(), fill.dims())?;
    let mut data = warp.warped.data().to_vec();
    for (i, &hole) in warp.mask.bits().iter().enumerate() {
        if hole {
            data[3 * i..3 * i + 3].copy_from_slice(&fill.data()[3 * i..3 * i + 3]);
        }
    }
    Frame::new(fill.width(), fill.height(), data)
}

/// Per-frame synthesis with a fixed configuration and variant.
pub struct Synthesizer {
    pub cfg: PipelineConfig,
    pub variant: Variant,
    pub weights: Option<RefinerWeights>,
    pub external_dir: Option<PathBuf>,
    pub poison_check: bool,
}

impl Synthesizer {
    /// Loads refiner weights for `full` from `cfg.weights`.
    pub fn new(cfg: &PipelineConfig, variant: Variant, opts: &RunOptions) -> Result<Self> {
        cfg.validate()?;
        let weights = if variant == Variant::Full {
            let path = cfg
                .weights
                .as_ref()
                .ok_or_else(|| Error::Config("variant full needs refiner weights".into()))?;
            Some(load_weights(path)?)
        } else {
            None
        };
        Self::with_weights(cfg, variant, weights, opts)
    }

    pub fn with_weights(
        cfg: &PipelineConfig,
        variant: Variant,
        weights: Option<RefinerWeights>,
        opts: &RunOptions,
    ) -> Result<Self> {
        cfg.validate()?;
        if variant == Variant::Full && weights.is_none() {
            return Err(Error::Config("variant full needs refiner weights".into()));
        }
        let b = &cfg.branches;
        let allowed = match variant {
            Variant::Poly => b.poly,
            Variant::Dl => (b.dl_adapter && opts.external_dir.is_some()) || b.fallback,
            Variant::DlDe => b.de,
            Variant::Full => true,
        };
        if !allowed {
            return Err(Error::Config(format!(
                "variant {variant} needs a branch that the configuration disables"
            )));
        }
        if let Some(dir) = &opts.external_dir {
            if b.dl_adapter && !dir.is_dir() {
                return Err(Error::MissingFile(dir.clone()));
            }
        }
        Ok(Synthesizer {
            cfg: cfg.clone(),
            variant,
            weights,
            external_dir: opts.external_dir.clone().filter(|_| b.dl_adapter),
            poison_check: opts.poison_check,
        })
    }

    fn poison_seed(&self, index: usize) -> Option<u64> {
        self.poison_check.then_some(0x9015_0000 ^ index as u64)
    }

    pub fn dl_view(&self, index: usize, warp: &WarpResult) -> Result<Frame> {
        let poison = self.poison_seed(index);
        match &self.external_dir {
            Some(dir) => {
                let ext = load_external_inpaint(dir, index, warp.warped.dims())?;
                checked_fill(warp, poison, "external composite", |_| composite_holes(warp, &ext))
            }
            None if self.cfg.branches.fallback => {
                checked_fill(warp, poison, "diffusion fill", |f| inpaint_fallback(f, &warp.mask))
            }
            None => Err(Error::Config(
                "DL branch has neither an external directory nor the fallback enabled".into(),
            )),
        }
    }

    pub fn de_view(&self, index: usize, frame: &Frame, disparity: &DisparityMap) -> Result<Frame> {
        let expanded = expand_disparity(disparity, &ExpansionParams::from_config(&self.cfg), None)?;
        let warp = forward_warp(frame, &expanded)?;
        checked_fill(&warp, self.poison_seed(index), "expansion fill", |f| fill_from_right(f, &warp.mask))
    }

    /// Every branch's candidate, computed regardless of the variant. A
    /// disabled poly or expansion branch is replaced by the DL view.
    pub fn branch_views(&self, index: usize, frame: &Frame, disparity: &DisparityMap) -> Result<BranchViews> {
        validate_pair(frame, disparity)?;
        let warp = forward_warp(frame, disparity)?;
        let dl = self.dl_view(index, &warp)?;
        let poly = if self.cfg.branches.poly {
            inpaint_poly(frame, disparity)?
        } else {
            dl.clone()
        };
        let de = if self.cfg.branches.de {
            self.de_view(index, frame, disparity)?
        } else {
            dl.clone()
        };
        Ok(BranchViews { warp, poly, de, dl })
    }

    /// The right view for this variant, and the plain warp's hole mask.
    pub fn synthesize(&self, index: usize, frame: &Frame, disparity: &DisparityMap) -> Result<(Frame, OcclusionMask)> {
        validate_pair(frame, disparity)?;
        match self.variant {
            Variant::Poly => {
                let warp = forward_warp(frame, disparity)?;
                Ok((inpaint_poly(frame, disparity)?, warp.mask))
            }
            Variant::Dl => {
                let warp = forward_warp(frame, disparity)?;
                Ok((self.dl_view(index, &warp)?, warp.mask))
            }
            Variant::DlDe => {
                let warp = forward_warp(frame, disparity)?;
                Ok((self.de_view(index, frame, disparity)?, warp.mask))
            }
            Variant::Full => {
                let v = self.branch_views(index, frame, disparity)?;
                let w = self.weights.as_ref().expect("checked at construction");
                let out = refiner_forward(&v.poly, &v.de, &v.dl, w)?;
                Ok((out.output_frame()?, v.warp.mask))
            }
        }
    }

    /// A training sample from a frame, its disparity and the true right view.
    pub fn training_sample(
        &self,
        index: usize,
        frame: &Frame,
        disparity: &DisparityMap,
        target: &Frame,
    ) -> Result<TrainingSample> {
        let v = self.branch_views(index, frame, disparity)?;
        TrainingSample::from_frames(&v.poly, &v.de, &v.dl, &v.warp.mask, target)
    }
}

/// Loads the disparity for frame `index` from `disparity/` or converts it
/// from `depth/`.
pub fn load_disparity(input_dir: &Path, index: usize, cfg: &PipelineConfig) -> Result<DisparityMap> {
    let disp_dir = input_dir.join("disparity");
    if disp_dir.is_dir() {
        for ext in ["pfm", "png"] {
            let p = indexed_path(&disp_dir, index, ext);
            if p.is_file() {
                return read_disparity(&p);
            }
        }
        return Err(Error::MissingFile(indexed_path(&disp_dir, index, "pfm")));
    }
    let depth_dir = input_dir.join("depth");
    if depth_dir.is_dir() {
        let p = indexed_path(&depth_dir, index, "pfm");
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
        let (w, h, z) = read_pfm_values(&p)?;
        return depth_to_disparity(w, h, &z, cfg.disparity_gain, cfg.disparity_shift);
    }
    Err(Error::MissingFile(disp_dir))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub index: usize,
    pub holes: usize,
    pub largest_hole_run: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub variant: Variant,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameReport>,
}

impl PipelineReport {
    /// Everything but timings, so reruns produce identical text.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "variant {}\nframes {}\nsize {}x{}\n# index holes largest_run\n",
            self.variant,
            self.frames.len(),
            self.width,
            self.height
        );
        for f in &self.frames {
            out.push_str(&format!("{:06} {} {}\n", f.index, f.holes, f.largest_hole_run));
        }
        out
    }

    pub fn timing_text(&self) -> String {
        let total: f64 = self.frames.iter().map(|f| f.seconds).sum();
        let mut out = format!("total_frame_seconds {total:.6}\n");
        for f in &self.frames {
            out.push_str(&format!("{:06} {:.6}\n", f.index, f.seconds));
        }
        out
    }
}

/// Frames processed per parallel batch before their outputs are written.
const BATCH: usize = 16;

pub fn run_pipeline(
    cfg: &PipelineConfig,
    input_dir: &Path,
    output_dir: &Path,
    variant: Variant,
    opts: &RunOptions,
) -> Result<PipelineReport> {
    let synth = Synthesizer::new(cfg, variant, opts)?;
    run_with(&synth, input_dir, output_dir, opts)
}

/// [`run_pipeline`] with a prepared synthesizer.
pub fn run_with(
    synth: &Synthesizer,
    input_dir: &Path,
    output_dir: &Path,
    opts: &RunOptions,
) -> Result<PipelineReport> {
    let left_dir = input_dir.join("left");
    let frames = list_indexed(&left_dir, &FRAME_EXTENSIONS)?;
    if frames.is_empty() {
        return Err(Error::Empty(format!("no frames in {}", left_dir.display())));
    }
    let right_dir = output_dir.join("right");
    fs::create_dir_all(&right_dir)?;
    if opts.composites {
        fs::create_dir_all(output_dir.join("sbs"))?;
        fs::create_dir_all(output_dir.join("anaglyph"))?;
    }
    let jobs: Vec<(usize, PathBuf)> = frames.into_iter().collect();
    let mut reports = Vec::with_capacity(jobs.len());
    let mut dims = None;

    for batch in jobs.chunks(BATCH) {
        let results = par::with_jobs(opts.jobs, || {
            par::map_slice(batch, |(index, path)| -> Result<(Frame, Frame, FrameReport)> {
                let start = Instant::now();
                let frame = read_frame(path)?;
                let disparity = load_disparity(input_dir, *index, &synth.cfg)?;
                let (right, mask) = synth.synthesize(*index, &frame, &disparity)?;
                let stats = hole_stats(&mask);
                Ok((
                    frame,
                    right,
                    FrameReport {
                        index: *index,
                        holes: stats.count,
                        largest_hole_run: stats.largest_run(),
                        seconds: start.elapsed().as_secs_f64(),
                    },
                ))
            })
        });
        for r in results {
            let (left, right, report) = r?;
            match dims {
                None => dims = Some(left.dims()),
                Some(d) => check_dims(d, left.dims())?,
            }
            let i = report.index;
            write_frame(&right, &indexed_path(&right_dir, i, "png"))?;
            if opts.composites {
                write_frame(&compose_sbs(&left, &right)?, &indexed_path(&output_dir.join("sbs"), i, "png"))?;
                write_frame(
                    &compose_anaglyph(&left, &right)?,
                    &indexed_path(&output_dir.join("anaglyph"), i, "png"),
                )?;
            }
            log::info!("frame {i:06}: {} holes", report.holes);
            reports.push(report);
        }
    }

    let (width, height) = dims.expect("at least one frame");
    let report = PipelineReport {
        variant: synth.variant,
        width,
        height,
        frames: reports,
    };
    fs::write(output_dir.join("report.txt"), report.to_text())?;
    fs::write(output_dir.join("timing.txt"), report.timing_text())?;
    Ok(report)
}

/// Builds training samples from `<dir>/left`, disparity or depth, and the
/// true right views in `<dir>/right`.
pub fn load_training_set(synth: &Synthesizer, dir: &Path) -> Result<Vec<TrainingSample>> {
    let left = list_indexed(&dir.join("left"), &FRAME_EXTENSIONS)?;
    let right = list_indexed(&dir.join("right"), &FRAME_EXTENSIONS)?;
    if left.is_empty() {
        return Err(Error::Empty(format!("no training frames in {}", dir.display())));
    }
    let items: Vec<(usize, PathBuf)> = left.into_iter().collect();
    par::map_slice(&items, |(i, path)| {
        let target = right
            .get(i)
            .ok_or_else(|| Error::MissingFile(indexed_path(&dir.join("right"), *i, "png")))?;
        let frame = read_frame(path)?;
        let disparity = load_disparity(dir, *i, &synth.cfg)?;
        synth.training_sample(*i, &frame, &disparity, &read_frame(target)?)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::disparity::write_disparity;
    use crate::refiner::{save_weights, RefinerArch};

    fn write_sequence(dir: &Path, n: usize, d: f32) {
        fs::create_dir_all(dir.join("left")).unwrap();
        fs::create_dir_all(dir.join("disparity")).unwrap();
        for i in 0..n {
            let f = Frame::from_fn(24, 16, |x, y| {
                [((x * 10 + i) % 256) as f32 / 255.0, (y * 15) as f32 / 255.0, 0.5]
            })
            .unwrap();
            write_frame(&f, &indexed_path(&dir.join("left"), i, "png")).unwrap();
            let m = DisparityMap::from_fn(24, 16, |x, _| if (8..16).contains(&x) { d } else { 0.0 }).unwrap();
            write_disparity(&m, &indexed_path(&dir.join("disparity"), i, "pfm")).unwrap();
        }
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("ml".parse::<Variant>().is_err());
    }

    #[test]
    fn zero_disparity_is_identity_for_every_variant() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("in");
        write_sequence(&input, 3, 0.0);
        let weights = tmp.path().join("w.bin");
        let arch = RefinerArch::new(vec![2, 3], 3).unwrap();
        save_weights(&RefinerWeights::selector(&arch, [1000.0; 3]).unwrap(), &weights).unwrap();
        let cfg = PipelineConfig {
            weights: Some(weights),
            ..PipelineConfig::default()
        };
        for v in Variant::ALL {
            let out = tmp.path().join(format!("out-{v}"));
            let opts = RunOptions {
                composites: true,
                poison_check: true,
                ..RunOptions::default()
            };
            let report = run_pipeline(&cfg, &input, &out, v, &opts).unwrap();
            assert_eq!(report.frames.len(), 3);
            for i in 0..3 {
                let left = read_frame(&indexed_path(&input.join("left"), i, "png")).unwrap();
                let right = read_frame(&indexed_path(&out.join("right"), i, "png")).unwrap();
                assert_eq!(left, right, "variant {v} frame {i}");
            }
            assert!(out.join("sbs/000000.png").is_file());
            assert!(out.join("report.txt").is_file());
        }
    }

    #[test]
    fn full_without_weights_is_a_config_error() {
        let r = Synthesizer::new(&PipelineConfig::default(), Variant::Full, &RunOptions::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn missing_external_dir() {
        let opts = RunOptions {
            external_dir: Some(PathBuf::from("/nonexistent/inpainted")),
            ..RunOptions::default()
        };
        let r = Synthesizer::new(&PipelineConfig::default(), Variant::Dl, &opts);
        assert!(matches!(r, Err(Error::MissingFile(_))));
    }

    #[test]
    fn poison_check_passes_with_holes() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("in");
        write_sequence(&input, 2, 4.0);
        for v in [Variant::Dl, Variant::DlDe, Variant::Poly] {
            let opts = RunOptions {
                poison_check: true,
                ..RunOptions::default()
            };
            let report = run_pipeline(&PipelineConfig::default(), &input, &tmp.path().join("o"), v, &opts).unwrap();
            assert!(report.frames[0].holes > 0);
        }
    }

    #[test]
    fn report_text_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("in");
        write_sequence(&input, 2, 3.0);
        let run = |o: &str| {
            run_pipeline(&PipelineConfig::default(), &input, &tmp.path().join(o), Variant::Dl, &RunOptions::default())
                .unwrap()
                .to_text()
        };
        assert_eq!(run("a"), run("b"));
    }
}
