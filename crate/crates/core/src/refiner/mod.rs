//! Mask-based fusion refiner: an encoder-decoder whose skip features pass
//! through gated update units, emitting three blend masks and a content
//! image that merge the candidate right views.

pub mod adam;
pub mod fuu;
pub mod network;
pub mod train;
pub mod weights;

pub use adam::Adam;
pub use fuu::fuu_update;
pub use network::{backward, forward, refiner_forward, HeadOverride, RefinerGrads, RefinerInputs, RefinerOutput};
pub use train::{
    sample_loss, sample_loss_and_grad, train_refiner, train_refiner_from, LossRecord, Objective,
    TrainOutcome, TrainingSample,
};
pub use weights::{load_weights, save_weights, FuuWeights, RefinerArch, RefinerWeights, INPUT_CHANNELS};
