//! Frame quality metrics and strided sequence evaluation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_dims, Error, Result};
use crate::io::frames::{list_indexed, read_frame, FRAME_EXTENSIONS};
use crate::model::Frame;
use crate::par;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean absolute difference over all pixels and channels.
pub fn mae(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10 log10(1 / mse)` with peak 1, capped at [`PSNR_CAP`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// PSNR restricted to pixels where `keep` is true.
pub fn masked_psnr(a: &Frame, b: &Frame, keep: &[bool]) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    if keep.len() != a.width() * a.height() {
        return Err(Error::BufferLength {
            expected: a.width() * a.height(),
            actual: keep.len(),
        });
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
        for c in 0..3 {
            let d = a.data()[3 * i + c] as f64 - b.data()[3 * i + c] as f64;
            sum += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::Empty("no pixels selected for PSNR".into()));
    }
    if sum == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (n as f64 / sum).log10()).min(PSNR_CAP))
}

/// Rec. 601 luma.
pub fn luminance(frame: &Frame) -> Vec<f64> {
    frame
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

fn ssim_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sums over every fully-inside window.
fn filter_valid(v: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &v[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM on luma: 11x11 Gaussian window (sigma 1.5), mean over
/// all window positions that fit inside the frame.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidDimensions { width: w, height: h });
    }
    let (ya, yb) = (luminance(a), luminance(b));
    let k = ssim_kernel();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let maps = par::map_range(5, |i| {
        let src = match i {
            0 => ya.clone(),
            1 => yb.clone(),
            2 => prod(&ya, &ya),
            3 => prod(&yb, &yb),
            _ => prod(&ya, &yb),
        };
        filter_valid(&src, w, h, &k)
    });
    let (mu_a, mu_b, aa, bb, ab) = (&maps[0], &maps[1], &maps[2], &maps[3], &maps[4]);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(sum / mu_a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub index: usize,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_frames(index: usize, pred: &Frame, gt: &Frame) -> Result<FrameScore> {
    Ok(FrameScore {
        index,
        mae: mae(pred, gt)?,
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub frames: Vec<FrameScore>,
    pub mean_mae: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl SequenceReport {
    pub fn from_scores(frames: Vec<FrameScore>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("no frames evaluated".into()));
        }
        let n = frames.len() as f64;
        let mean = |f: fn(&FrameScore) -> f64| frames.iter().map(f).sum::<f64>() / n;
        Ok(SequenceReport {
            mean_mae: mean(|s| s.mae),
            mean_psnr: mean(|s| s.psnr),
            mean_ssim: mean(|s| s.ssim),
            frames,
        })
    }

    /// `frame_index mae psnr ssim`, one line per frame.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.frames {
            let _ = writeln!(out, "{} {:.6} {:.4} {:.6}", s.index, s.mae, s.psnr, s.ssim);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>8} {:>10} {:>10} {:>10}\n", "frame", "MAE", "PSNR", "SSIM");
        for s in &self.frames {
            let _ = writeln!(out, "{:>8} {:>10.6} {:>10.4} {:>10.6}", s.index, s.mae, s.psnr, s.ssim);
        }
        let _ = writeln!(
            out,
            "{:>8} {:>10.6} {:>10.4} {:>10.6}",
            "mean", self.mean_mae, self.mean_psnr, self.mean_ssim
        );
        out
    }
}

/// Indices `0, stride, 2 * stride, ...` below `count`.
pub fn sampled_indices(count: usize, stride: usize) -> Vec<usize> {
    (0..count).step_by(stride.max(1)).collect()
}

/// Scores every `stride`-th ground-truth frame against the prediction with
/// the same index. Ground-truth indices must run `0..N` without gaps.
pub fn evaluate_sequence(pred_dir: &Path, gt_dir: &Path, stride: usize) -> Result<SequenceReport> {
    if stride == 0 {
        return Err(Error::Config("evaluation stride must be >= 1".into()));
    }
    let gt = list_indexed(gt_dir, &FRAME_EXTENSIONS)?;
    let pred = list_indexed(pred_dir, &FRAME_EXTENSIONS)?;
    if gt.is_empty() {
        return Err(Error::Empty(format!("no frames in {}", gt_dir.display())));
    }
    for (expected, &found) in gt.keys().enumerate() {
        if expected != found {
            return Err(Error::MissingFile(crate::io::frames::indexed_path(gt_dir, expected, "png")));
        }
    }
    let indices = sampled_indices(gt.len(), stride);
    let scores = par::map_slice(&indices, |&i| -> Result<FrameScore> {
        let p = pred
            .get(&i)
            .ok_or_else(|| Error::MissingFile(crate::io::frames::indexed_path(pred_dir, i, "png")))?;
        score_frames(i, &read_frame(p)?, &read_frame(&gt[&i])?)
    });
    SequenceReport::from_scores(scores.into_iter().collect::<Result<Vec<_>>>()?)
}
