//! Adapter for frames inpainted by an external video inpainter.
//!
//! The external tool writes one image per frame into a directory, named by
//! the zero-padded six-digit frame index (`000042.png`, or `.ppm`).

use std::path::Path;

use crate::error::{check_dims, Error, Result};
use crate::io::frames::{indexed_path, read_frame, FRAME_EXTENSIONS};
use crate::model::Frame;

pub fn load_external_inpaint(
    dir: &Path,
    frame_index: usize,
    expected_dims: (usize, usize),
) -> Result<Frame> {
    let path = FRAME_EXTENSIONS
        .iter()
        .map(|ext| indexed_path(dir, frame_index, ext))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingFile(indexed_path(dir, frame_index, "png")))?;
    let frame = read_frame(&path)?;
    check_dims(expected_dims, frame.dims())?;
    Ok(frame)
}
