//! File formats and dataset utilities.

pub mod disparity;
pub mod frames;
pub mod manifest;

pub use disparity::{read_disparity, write_disparity};
pub use frames::{read_frame, write_frame};
pub use manifest::{make_manifest, Manifest, Split};
