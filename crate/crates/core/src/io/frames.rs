//! 8-bit RGB frame files: PNG and binary PPM (P6, maxval 255).
//!
//! Channels convert as `v / 255` on read and `round(v * 255)` on write.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::model::Frame;

pub const FRAME_EXTENSIONS: [&str; 2] = ["png", "ppm"];

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

pub fn frame_from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Frame> {
    if bytes.len() != 3 * width * height {
        return Err(Error::BufferLength {
            expected: 3 * width * height,
            actual: bytes.len(),
        });
    }
    Frame::new(width, height, bytes.iter().map(|&b| from_u8(b)).collect())
}

pub fn frame_to_rgb8(frame: &Frame) -> Vec<u8> {
    frame.data().iter().map(|&v| to_u8(v)).collect()
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Splits off the whitespace-separated header tokens of a PNM/PFM file.
/// Returns the tokens and the offset of the first data byte (one whitespace
/// byte after the last token). `#` comments are skipped.
pub(crate) fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(Error::Corrupt("truncated header".into()));
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::Corrupt("header not terminated".into()));
    }
    Ok((tokens, i + 1))
}

pub(crate) fn parse_dim(token: &str) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Corrupt(format!("bad dimension {token:?}"))),
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::UnsupportedFormat("not a binary PPM (P6)".into()));
    }
    let (tokens, offset) = header_tokens(bytes, 4)?;
    let width = parse_dim(&tokens[1])?;
    let height = parse_dim(&tokens[2])?;
    let maxval: u32 = tokens[3]
        .parse()
        .map_err(|_| Error::Corrupt(format!("bad maxval {:?}", tokens[3])))?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PPM maxval {maxval} (only 255 is supported)"
        )));
    }
    let needed = 3 * width * height;
    let data = &bytes[offset..];
    if data.len() < needed {
        return Err(Error::Corrupt(format!(
            "PPM pixel data truncated: {} of {needed} bytes",
            data.len()
        )));
    }
    frame_from_rgb8(width, height, &data[..needed])
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame_to_rgb8(frame));
    out
}

/// Reads a PNG or PPM frame, chosen by file extension.
pub fn read_frame(path: &Path) -> Result<Frame> {
    match extension(path).as_str() {
        "ppm" => decode_ppm(&read_bytes(path)?),
        "png" => {
            let bytes = read_bytes(path)?;
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?
                .to_rgb8();
            frame_from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
        }
        other => Err(Error::UnsupportedFormat(format!(
            "frame extension {other:?} (expected png or ppm)"
        ))),
    }
}

pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    match extension(path).as_str() {
        "ppm" => Ok(fs::write(path, encode_ppm(frame))?),
        "png" => {
            let img: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(
                frame.width() as u32,
                frame.height() as u32,
                frame_to_rgb8(frame),
            )
            .expect("buffer size matches frame");
            img.save_with_format(path, image::ImageFormat::Png)?;
            Ok(())
        }
        other => Err(Error::UnsupportedFormat(format!(
            "frame extension {other:?} (expected png or ppm)"
        ))),
    }
}

/// `dir/NNNNNN.ext`.
pub fn indexed_path(dir: &Path, index: usize, ext: &str) -> PathBuf {
    dir.join(format!("{index:06}.{ext}"))
}

/// Files in `dir` named `<digits>.<ext>` for one of `extensions`, keyed by
/// index. The first extension listed wins when an index has several files.
pub fn list_indexed(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<usize, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut found: BTreeMap<usize, (usize, PathBuf)> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let ext = extension(&path);
        let Some(rank) = extensions.iter().position(|e| *e == ext) else {
            continue;
        };
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let Ok(index) = stem.parse::<usize>() else {
            continue;
        };
        match found.get(&index) {
            Some((r, _)) if *r <= rank => {}
            _ => {
                found.insert(index, (rank, path));
            }
        }
    }
    Ok(found.into_iter().map(|(i, (_, p))| (i, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Frame {
        Frame::from_fn(2, 2, |x, y| {
            [(x * 100) as f32 / 255.0, (y * 200) as f32 / 255.0, 7.0 / 255.0]
        })
        .unwrap()
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_frame(&sample(), &p).unwrap();
            assert_eq!(read_frame(&p).unwrap(), sample());
        }
    }

    #[test]
    fn ppm_bytes_round_trip_exactly() {
        let mut bytes = b"P6\n3 1\n255\n".to_vec();
        bytes.extend([0, 1, 2, 100, 150, 200, 253, 254, 255]);
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn ppm_header_with_comment() {
        let mut bytes = b"P6 # made by hand\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 51]);
        let f = decode_ppm(&bytes).unwrap();
        assert_eq!(f.pixel(0, 0), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn ppm_errors() {
        assert!(matches!(decode_ppm(b"P6\n3 "), Err(Error::Corrupt(_))));
        assert!(matches!(
            decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Corrupt(_))));
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n0 0 0"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn unknown_extension_is_unsupported() {
        assert!(matches!(
            read_frame(Path::new("x.bmp")),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn indexed_listing() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["000003.png", "000001.ppm", "000001.png", "notes.txt", "abc.png"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let found = list_indexed(dir.path(), &FRAME_EXTENSIONS).unwrap();
        assert_eq!(found.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert!(found[&1].ends_with("000001.png"));
        assert_eq!(indexed_path(Path::new("d"), 42, "png"), Path::new("d/000042.png"));
    }
}
