//! Hole filling for the warped right view.
//!
//! Three branches feed the refiner: polyline rasterization (`poly`),
//! disparity expansion (`de`), and a learned video inpainter whose frames
//! are read from disk (`external`). `fallback` stands in for the learned
//! branch when no external frames are available.

pub mod de;
pub mod external;
pub mod fallback;
pub mod poly;

pub use de::{fill_from_right, inpaint_de, inpaint_de_detailed, DeOutput};
pub use external::load_external_inpaint;
pub use fallback::{diffusion_fill, inpaint_fallback, DiffusionStats};
pub use poly::inpaint_poly;
