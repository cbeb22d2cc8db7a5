//! End-to-end demosaicing pipeline: configuration, event inpainting, the
//! main network, and tiled inference.

mod config;
mod model;
mod n1;
mod n2;

pub use config::ModelConfig;
pub use model::{account, Model, RunOptions, RunOutput, Tiling};
pub use n1::InpaintNet;
pub use n2::MainNet;
