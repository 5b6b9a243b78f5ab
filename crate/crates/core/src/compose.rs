//! Stereo pair packing: side-by-side and red/cyan anaglyph.

use crate::error::{check_dims, Error, Result};
use crate::model::Frame;

/// Places `left` and `right` next to each other in one double-width frame.
pub fn compose_sbs(left: &Frame, right: &Frame) -> Result<Frame> {
    check_dims(left.dims(), right.dims())?;
    let (w, h) = left.dims();
    let mut data = Vec::with_capacity(6 * w * h);
    for y in 0..h {
        data.extend_from_slice(left.row(y));
        data.extend_from_slice(right.row(y));
    }
    Ok(Frame::from_raw_unchecked(2 * w, h, data))
}

/// Inverse of [`compose_sbs`]. Fails on odd widths.
pub fn split_sbs(frame: &Frame) -> Result<(Frame, Frame)> {
    let (w2, h) = frame.dims();
    if w2 % 2 != 0 {
        return Err(Error::InvalidDimensions {
            width: w2,
            height: h,
        });
    }
    let w = w2 / 2;
    let mut left = Vec::with_capacity(3 * w * h);
    let mut right = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        let (l, r) = frame.row(y).split_at(3 * w);
        left.extend_from_slice(l);
        right.extend_from_slice(r);
    }
    Ok((
        Frame::from_raw_unchecked(w, h, left),
        Frame::from_raw_unchecked(w, h, right),
    ))
}

/// Red from the left view, green and blue from the right view.
pub fn compose_anaglyph(left: &Frame, right: &Frame) -> Result<Frame> {
    check_dims(left.dims(), right.dims())?;
    let data = left
        .data()
        .chunks_exact(3)
        .zip(right.data().chunks_exact(3))
        .flat_map(|(l, r)| [l[0], r[1], r[2]])
        .collect();
    Ok(Frame::from_raw_unchecked(left.width(), left.height(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbs_layout() {
        let red = Frame::filled(8, 8, [1.0, 0.0, 0.0]).unwrap();
        let blue = Frame::filled(8, 8, [0.0, 0.0, 1.0]).unwrap();
        let s = compose_sbs(&red, &blue).unwrap();
        assert_eq!(s.dims(), (16, 8));
        for y in 0..8 {
            for x in 0..16 {
                let want = if x < 8 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
                assert_eq!(s.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn sbs_identical_halves() {
        let f = Frame::from_fn(2, 2, |x, y| [x as f32 * 0.5, y as f32 * 0.5, 0.25]).unwrap();
        let s = compose_sbs(&f, &f).unwrap();
        assert_eq!(s.dims(), (4, 2));
        let (l, r) = split_sbs(&s).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn split_rejects_odd_width() {
        let f = Frame::filled(3, 2, [0.0; 3]).unwrap();
        assert!(split_sbs(&f).is_err());
    }

    #[test]
    fn stereo_resolution_split() {
        let f = Frame::filled(2360, 1180, [0.5; 3]).unwrap();
        let (l, r) = split_sbs(&f).unwrap();
        assert_eq!(l.dims(), (1180, 1180));
        assert_eq!(r.dims(), (1180, 1180));
    }

    #[test]
    fn anaglyph_routing() {
        let white = Frame::filled(4, 4, [1.0; 3]).unwrap();
        let black = Frame::filled(4, 4, [0.0; 3]).unwrap();
        let a = compose_anaglyph(&white, &black).unwrap();
        assert!(a.data().chunks(3).all(|p| p == [1.0, 0.0, 0.0]));
        assert_eq!(compose_anaglyph(&white, &white).unwrap(), white);
    }

    #[test]
    fn mismatched_sizes_fail() {
        let a = Frame::filled(4, 4, [0.0; 3]).unwrap();
        let b = Frame::filled(4, 3, [0.0; 3]).unwrap();
        assert!(compose_sbs(&a, &b).is_err());
        assert!(compose_anaglyph(&a, &b).is_err());
    }
}
