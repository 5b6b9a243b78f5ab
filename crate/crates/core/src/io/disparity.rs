//! Disparity map files.
//!
//! * PFM grayscale (`Pf`): a negative scale marks little-endian data, a
//!   positive one big-endian. Rows run bottom to top.
//! * 16-bit grayscale PNG: stored value `raw`, disparity `raw * scale`,
//!   with `scale` kept in a sidecar text file `<name>.png.scale`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::io::frames::{header_tokens, parse_dim};
use crate::model::DisparityMap;

/// Grayscale PFM payload as `(width, height, values)` in top-down row order,
/// without any range check.
pub fn decode_pfm_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 2 {
        return Err(Error::BadMagic);
    }
    match &bytes[..2] {
        b"Pf" => {}
        b"PF" => {
            return Err(Error::UnsupportedFormat(
                "colour PFM; disparity must be single-channel".into(),
            ))
        }
        _ => return Err(Error::BadMagic),
    }
    let (tokens, offset) = header_tokens(bytes, 4)?;
    if tokens[0] != "Pf" {
        return Err(Error::BadMagic);
    }
    let width = parse_dim(&tokens[1])?;
    let height = parse_dim(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Corrupt(format!("bad PFM scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Corrupt(format!("bad PFM scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let needed = 4 * width * height;
    let data = &bytes[offset..];
    if data.len() < needed {
        return Err(Error::Truncated(format!(
            "PFM data has {} of {needed} bytes",
            data.len()
        )));
    }
    let mut values = vec![0.0f32; width * height];
    for (k, chunk) in data[..needed].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, x) = (k / width, k % width);
        values[(height - 1 - file_row) * width + x] = v;
    }
    Ok((width, height, values))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let (width, height, values) = decode_pfm_raw(bytes)?;
    DisparityMap::new(width, height, values)
}

/// Little-endian PFM with scale -1.
pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    encode_pfm_with_endianness(map, true)
}

pub fn encode_pfm_with_endianness(map: &DisparityMap, little_endian: bool) -> Vec<u8> {
    let (w, h) = map.dims();
    let scale = if little_endian { "-1.0" } else { "1.0" };
    let mut out = format!("Pf\n{w} {h}\n{scale}\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for &v in map.row(y) {
            out.extend(if little_endian {
                v.to_le_bytes()
            } else {
                v.to_be_bytes()
            });
        }
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Reads a grayscale PFM of unconstrained values, such as a depth map.
pub fn read_pfm_values(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    decode_pfm_raw(&read_bytes(path)?)
}

pub fn scale_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale");
    PathBuf::from(s)
}

fn parse_scale(text: &str) -> Result<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| Error::Corrupt(text.into()))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::Corrupt(text.into()))?;
            n / d
        }
        None => text.parse().map_err(|_| Error::Corrupt(text.into()))?,
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Corrupt(format!("bad disparity scale {text:?}")));
    }
    Ok(value)
}

pub fn read_png16_disparity(path: &Path) -> Result<DisparityMap> {
    let sidecar = scale_sidecar(path);
    let scale_text =
        fs::read_to_string(&sidecar).map_err(|_| Error::MissingFile(sidecar.clone()))?;
    let scale = parse_scale(&scale_text)?;
    let img = image::open(path)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "disparity PNG must be 16-bit grayscale, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let values = gray
        .as_raw()
        .iter()
        .map(|&raw| (raw as f64 * scale) as f32)
        .collect();
    DisparityMap::new(w, h, values)
}

pub fn write_png16_disparity(map: &DisparityMap, path: &Path, scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!("disparity scale must be > 0, got {scale}")));
    }
    let mut raw = Vec::with_capacity(map.values().len());
    for (index, &v) in map.values().iter().enumerate() {
        let q = (v as f64 / scale).round();
        if q > u16::MAX as f64 {
            return Err(Error::OutOfRange {
                index,
                value: v as f64,
                min: 0.0,
                max: u16::MAX as f64 * scale,
            });
        }
        raw.push(q as u16);
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .expect("buffer size matches map");
    img.save_with_format(path, image::ImageFormat::Png)?;
    fs::write(scale_sidecar(path), format!("{scale}\n"))?;
    Ok(())
}

/// Reads `.pfm` or 16-bit `.png` (with its scale sidecar).
pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => decode_pfm(&read_bytes(path)?),
        Some("png") => read_png16_disparity(path),
        _ => Err(Error::UnsupportedFormat(format!(
            "disparity file {} (expected .pfm or .png)",
            path.display()
        ))),
    }
}

/// Writes `.pfm` (little-endian) or 16-bit `.png` at scale 1/64.
pub fn write_disparity(map: &DisparityMap, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(fs::write(path, encode_pfm(map))?),
        Some("png") => write_png16_disparity(map, path, 1.0 / 64.0),
        _ => Err(Error::UnsupportedFormat(format!(
            "disparity file {} (expected .pfm or .png)",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_map(seed: u64) -> DisparityMap {
        let mut rng = crate::rng::seeded_rng(seed);
        let values = (0..35).map(|_| rng.gen_range(0.0f32..7.0)).collect();
        DisparityMap::new(7, 5, values).unwrap()
    }

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let m = random_map(1);
        let back = decode_pfm(&encode_pfm(&m)).unwrap();
        assert_eq!(
            back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn big_endian_twin_decodes_identically() {
        let m = random_map(2);
        let le = encode_pfm_with_endianness(&m, true);
        let be = encode_pfm_with_endianness(&m, false);
        assert_ne!(le, be);
        assert_eq!(decode_pfm(&be).unwrap(), decode_pfm(&le).unwrap());
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let m = DisparityMap::new(1, 2, vec![0.25, 0.75]).unwrap();
        let bytes = encode_pfm(&m);
        let data = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(data[..4].try_into().unwrap()), 0.75);
    }

    #[test]
    fn pfm_errors() {
        assert!(matches!(decode_pfm(b"P6\n1 1\n-1\n"), Err(Error::BadMagic)));
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1\n"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1\n\0\0\0\0"), Err(Error::Truncated(_))));
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend(f32::NAN.to_le_bytes());
        assert!(matches!(decode_pfm(&nan), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn png16_uses_sidecar_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(3, 1, vec![0, 64, 100]).unwrap();
        img.save(&p).unwrap();
        fs::write(scale_sidecar(&p), "1/64").unwrap();
        let m = read_disparity(&p).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0, 100.0 / 64.0]);

        let q = dir.path().join("e.png");
        write_disparity(&m, &q).unwrap();
        assert_eq!(read_disparity(&q).unwrap(), m);
    }

    #[test]
    fn png16_without_sidecar_is_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(1, 1, vec![3]).unwrap();
        img.save(&p).unwrap();
        assert!(matches!(read_disparity(&p), Err(Error::MissingFile(_))));
    }
}
