pub mod bench;
pub mod binary;
pub mod blocks;
pub mod cfa;
pub mod check;
pub mod cost;
pub mod encoder;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod reference;
pub mod scan;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{Real, Shape, Tensor};
