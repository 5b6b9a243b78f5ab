use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stereo_core::compose::{compose_anaglyph, compose_sbs, split_sbs};
use stereo_core::disparity::{expand_disparity, ExpansionParams};
use stereo_core::inpaint::{inpaint_fallback, inpaint_poly, load_external_inpaint};
use stereo_core::io::frames::indexed_path;
use stereo_core::io::{make_manifest, read_disparity, read_frame, write_disparity, write_frame};
use stereo_core::metrics::evaluate_sequence;
use stereo_core::pipeline::{load_training_set, run_pipeline, RunOptions, Synthesizer, Variant};
use stereo_core::refiner::{load_weights, refiner_forward, save_weights, train_refiner, RefinerArch};
use stereo_core::scene::{analytic_scene, random_analytic_params};
use stereo_core::{par, Error, ErrorKind, Frame, PipelineConfig};

#[derive(Parser)]
#[command(name = "stereo", version, about = "Right-view synthesis for stereo conversion")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set alpha=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-warp one frame; writes the warped view and its hole mask.
    Warp {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hole mask as a black/white image.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Widen foreground disparity across depth edges.
    ExpandDisparity {
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Run one hole-filling branch on a single frame.
    Inpaint {
        #[arg(long, value_enum)]
        branch: Branch,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Externally inpainted frames (branch `external`).
        #[arg(long)]
        external: Option<PathBuf>,
        /// Frame index used to look up the external frame.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Merge three candidate views with trained refiner weights.
    Refine {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        de: PathBuf,
        #[arg(long)]
        dl: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the three masks and the content image here.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Train refiner weights on `<data>/left`, disparity and `<data>/right`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Channels per level, finest first.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        channels: Vec<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Per-step losses as `step total content perceptual adversarial`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        external: Option<PathBuf>,
    },
    /// Score predicted right views against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Evaluate every n-th frame; defaults to the configured stride.
        #[arg(long)]
        stride: Option<usize>,
        /// Print `frame_index mae psnr ssim` lines instead of a table.
        #[arg(long)]
        lines: bool,
    },
    /// Build a side-by-side or anaglyph frame.
    Compose {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        anaglyph: bool,
    },
    /// Split a side-by-side frame into its two views.
    SplitSbs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
    },
    /// Seeded train/test split of the video folders under a root.
    Manifest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 955)]
        train: usize,
        #[arg(long, default_value_t = 45)]
        test: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline over a frame directory.
    Convert(ConvertArgs),
    /// Write synthetic scenes with known right views.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 6)]
        disparity: usize,
    },
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// poly, dl, dl+de or full.
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    external: Option<PathBuf>,
    /// Also write side-by-side and anaglyph frames.
    #[arg(long)]
    composites: bool,
    /// Verify that no output depends on pixels inside holes.
    #[arg(long)]
    poison_check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Branch {
    Poly,
    De,
    Fallback,
    External,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mask_frame(mask: &stereo_core::OcclusionMask) -> Result<Frame> {
    let (w, h) = mask.dims();
    Ok(Frame::from_fn(w, h, |x, y| [if mask.get(x, y) { 1.0 } else { 0.0 }; 3])?)
}

fn gray_frame(values: &[f64], w: usize, h: usize) -> Result<Frame> {
    Ok(Frame::from_fn(w, h, |x, y| [values[y * w + x].clamp(0.0, 1.0) as f32; 3])?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Warp {
            left,
            disparity,
            out,
            mask,
        } => {
            let frame = read_frame(&left)?;
            let d = read_disparity(&disparity)?;
            let w = stereo_core::forward_warp(&frame, &d)?;
            ensure_parent(&out)?;
            write_frame(&w.warped, &out)?;
            if let Some(m) = mask {
                write_frame(&mask_frame(&w.mask)?, &m)?;
            }
            println!("holes {}", w.mask.count());
        }
        Command::ExpandDisparity {
            disparity,
            out,
            radius,
            threshold,
        } => {
            let mut params = ExpansionParams::from_config(&cfg);
            if let Some(k) = radius {
                params.radius = k;
            }
            if let Some(l) = threshold {
                params.threshold = l;
            }
            let d = read_disparity(&disparity)?;
            write_disparity(&expand_disparity(&d, &params, None)?, &out)?;
        }
        Command::Inpaint {
            branch,
            left,
            disparity,
            out,
            external,
            index,
        } => {
            let frame = read_frame(&left)?;
            let d = read_disparity(&disparity)?;
            let result = match branch {
                Branch::Poly => inpaint_poly(&frame, &d)?,
                Branch::De => {
                    let params = ExpansionParams::from_config(&cfg);
                    stereo_core::inpaint::inpaint_de(&frame, &d, &params)?
                }
                Branch::Fallback => {
                    let w = stereo_core::forward_warp(&frame, &d)?;
                    inpaint_fallback(&w.warped, &w.mask)?
                }
                Branch::External => {
                    let dir = external.ok_or_else(|| Error::Config("--external is required".into()))?;
                    let w = stereo_core::forward_warp(&frame, &d)?;
                    let ext = load_external_inpaint(&dir, index, frame.dims())?;
                    // Keep warped pixels, take holes from the external frame.
                    let mut data = w.warped.data().to_vec();
                    for (i, &hole) in w.mask.bits().iter().enumerate() {
                        if hole {
                            data[3 * i..3 * i + 3].copy_from_slice(&ext.data()[3 * i..3 * i + 3]);
                        }
                    }
                    Frame::new(frame.width(), frame.height(), data)?
                }
            };
            ensure_parent(&out)?;
            write_frame(&result, &out)?;
        }
        Command::Refine {
            poly,
            de,
            dl,
            weights,
            out,
            debug_dir,
        } => {
            let w = load_weights(&weights)?;
            let r = refiner_forward(&read_frame(&poly)?, &read_frame(&de)?, &read_frame(&dl)?, &w)?;
            ensure_parent(&out)?;
            write_frame(&r.output_frame()?, &out)?;
            if let Some(dir) = debug_dir {
                fs::create_dir_all(&dir)?;
                let (h, wd) = r.output.spatial();
                for (k, m) in r.masks.iter().enumerate() {
                    write_frame(&gray_frame(m.data(), wd, h)?, &dir.join(format!("mask{}.png", k + 1)))?;
                }
                write_frame(&r.content.to_frame()?, &dir.join("content.png"))?;
            }
        }
        Command::Train {
            data,
            out,
            channels,
            steps,
            trace,
            external,
        } => {
            let mut cfg = cfg;
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            let arch = RefinerArch::new(channels, 3)?;
            let opts = RunOptions {
                external_dir: external,
                ..RunOptions::default()
            };
            let synth = Synthesizer::with_weights(&cfg, Variant::Dl, None, &opts)?;
            let outcome = par::with_jobs(cli.jobs, || -> Result<_> {
                let samples = load_training_set(&synth, &data)?;
                log::info!("training on {} samples", samples.len());
                Ok(train_refiner(&samples, &arch, &cfg, cli.seed)?)
            })?;
            ensure_parent(&out)?;
            save_weights(&outcome.weights, &out)?;
            if let Some(t) = trace {
                let mut text = String::from("# step total content perceptual adversarial\n");
                for (i, r) in outcome.trace.iter().enumerate() {
                    text.push_str(&format!(
                        "{i} {:.9e} {:.9e} {:.9e} {:.9e}\n",
                        r.total, r.content, r.perceptual, r.adversarial
                    ));
                }
                fs::write(&t, text)?;
            }
            println!(
                "content loss {:.6} -> {:.6}",
                outcome.initial_content, outcome.final_content
            );
        }
        Command::Metrics {
            pred,
            gt,
            stride,
            lines,
        } => {
            let stride = stride.unwrap_or(cfg.eval_stride);
            let report = par::with_jobs(cli.jobs, || evaluate_sequence(&pred, &gt, stride))?;
            if lines {
                print!("{}", report.to_lines());
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Compose {
            left,
            right,
            out,
            anaglyph,
        } => {
            let (l, r) = (read_frame(&left)?, read_frame(&right)?);
            let f = if anaglyph {
                compose_anaglyph(&l, &r)?
            } else {
                compose_sbs(&l, &r)?
            };
            ensure_parent(&out)?;
            write_frame(&f, &out)?;
        }
        Command::SplitSbs { input, left, right } => {
            let (l, r) = split_sbs(&read_frame(&input)?)?;
            ensure_parent(&left)?;
            ensure_parent(&right)?;
            write_frame(&l, &left)?;
            write_frame(&r, &right)?;
        }
        Command::Manifest {
            root,
            train,
            test,
            out,
        } => {
            let m = make_manifest(&root, train, test, cli.seed)?;
            ensure_parent(&out)?;
            fs::write(&out, m.to_text())?;
        }
        Command::Convert(args) => {
            let mut cfg = cfg;
            if args.weights.is_some() {
                cfg.weights = args.weights;
            }
            let variant: Variant = args.variant.parse()?;
            let opts = RunOptions {
                external_dir: args.external,
                composites: args.composites,
                poison_check: args.poison_check,
                jobs: cli.jobs,
            };
            let report = run_pipeline(&cfg, &args.input, &args.output, variant, &opts)?;
            println!(
                "{} frames, variant {}, written to {}",
                report.frames.len(),
                report.variant,
                args.output.display()
            );
        }
        Command::Synth {
            out,
            frames,
            width,
            height,
            disparity,
        } => {
            for sub in ["left", "disparity", "right"] {
                fs::create_dir_all(out.join(sub))?;
            }
            for i in 0..frames {
                let p = random_analytic_params(width, height, disparity, cli.seed.wrapping_add(i as u64))?;
                let s = analytic_scene(&p)?;
                write_frame(&s.left, &indexed_path(&out.join("left"), i, "png"))?;
                write_frame(&s.right, &indexed_path(&out.join("right"), i, "png"))?;
                write_disparity(&s.disparity, &indexed_path(&out.join("disparity"), i, "pfm"))?;
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 3,
        Some(ErrorKind::Numeric) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
