//! Disparity-expansion branch: expand, warp, then fill what is left from
//! the background side.

use crate::disparity::{expand_disparity, ExpansionParams};
use crate::error::{check_dims, Result};
use crate::model::{validate_pair, DisparityMap, Frame, OcclusionMask};
use crate::warp::{forward_warp, WarpResult};

/// Copies into each hole the nearest known pixel to its right in the same
/// row, or the nearest one to its left when the row ends first.
///
/// Rows without any known pixel copy the nearest row that has one (upwards
/// first). A frame that is all holes comes back mid-grey.
pub fn fill_from_right(warped: &Frame, mask: &OcclusionMask) -> Result<Frame> {
    check_dims(warped.dims(), mask.dims())?;
    let (w, h) = warped.dims();
    let mut out = warped.data().to_vec();
    let mut row_has_known = vec![false; h];

    for y in 0..h {
        let holes = mask.row(y);
        let row = &mut out[3 * w * y..3 * w * (y + 1)];
        let mut source: Option<usize> = None;
        for x in (0..w).rev() {
            if !holes[x] {
                source = Some(x);
            } else if let Some(s) = source {
                row.copy_within(3 * s..3 * s + 3, 3 * x);
            }
        }
        // Holes at the right end had nothing to their right.
        match holes.iter().rposition(|&b| !b) {
            Some(last) => {
                row_has_known[y] = true;
                for x in last + 1..w {
                    row.copy_within(3 * last..3 * last + 3, 3 * x);
                }
            }
            None => row_has_known[y] = false,
        }
    }

    if row_has_known.iter().all(|&k| !k) {
        return Frame::filled(w, h, [0.5; 3]);
    }
    for y in 0..h {
        if row_has_known[y] {
            continue;
        }
        let donor = (0..y)
            .rev()
            .find(|&r| row_has_known[r])
            .or_else(|| (y + 1..h).find(|&r| row_has_known[r]))
            .expect("some row has known pixels");
        out.copy_within(3 * w * donor..3 * w * (donor + 1), 3 * w * y);
    }
    Ok(Frame::from_raw_unchecked(w, h, out))
}

#[derive(Debug, Clone)]
pub struct DeOutput {
    pub expanded: DisparityMap,
    pub warp: WarpResult,
    pub filled: Frame,
}

/// Runs the branch and keeps the intermediates.
pub fn inpaint_de_detailed(
    frame: &Frame,
    disparity: &DisparityMap,
    params: &ExpansionParams,
) -> Result<DeOutput> {
    validate_pair(frame, disparity)?;
    let expanded = expand_disparity(disparity, params, None)?;
    let warp = forward_warp(frame, &expanded)?;
    let filled = fill_from_right(&warp.warped, &warp.mask)?;
    Ok(DeOutput {
        expanded,
        warp,
        filled,
    })
}

pub fn inpaint_de(frame: &Frame, disparity: &DisparityMap, params: &ExpansionParams) -> Result<Frame> {
    Ok(inpaint_de_detailed(frame, disparity, params)?.filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_prefers_right_neighbour() {
        let f = Frame::new(4, 1, [[0.1f32, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.4, 0.0, 0.0]].concat())
            .unwrap();
        let m = OcclusionMask::new(4, 1, vec![false, true, true, false]).unwrap();
        let out = fill_from_right(&f, &m).unwrap();
        assert_eq!(out.pixel(1, 0), [0.4, 0.0, 0.0]);
        assert_eq!(out.pixel(2, 0), [0.4, 0.0, 0.0]);
        assert_eq!(out.pixel(0, 0), [0.1, 0.0, 0.0]);
    }

    #[test]
    fn fill_falls_back_left_at_row_end() {
        let f = Frame::new(3, 1, [[0.7f32, 0.0, 0.0], [0.0; 3], [0.0; 3]].concat()).unwrap();
        let m = OcclusionMask::new(3, 1, vec![false, true, true]).unwrap();
        let out = fill_from_right(&f, &m).unwrap();
        assert_eq!(out.pixel(2, 0), [0.7, 0.0, 0.0]);
    }

    #[test]
    fn empty_rows_borrow_a_neighbour_row() {
        let f = Frame::from_fn(2, 2, |_, y| if y == 0 { [0.0; 3] } else { [0.6; 3] }).unwrap();
        let m = OcclusionMask::new(2, 2, vec![true, true, false, false]).unwrap();
        let out = fill_from_right(&f, &m).unwrap();
        assert_eq!(out.pixel(0, 0), [0.6; 3]);
    }

    #[test]
    fn zero_disparity_is_identity() {
        let f = Frame::from_fn(16, 8, |x, y| [(x * y % 7) as f32 / 7.0, 0.2, 0.9]).unwrap();
        let d = DisparityMap::zeros(16, 8).unwrap();
        assert_eq!(inpaint_de(&f, &d, &ExpansionParams::new(2, 4.0)).unwrap(), f);
    }
}
