//! Prompt-agnostic adversarial perturbations for a toy conditional diffusion
//! model, plus numerical checks of the supporting approximation bounds.

pub mod attack;
pub mod bounds;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod image;
pub mod prompt;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use image::Image;
pub use rng::Rng;
pub use tensor::{DType, Tensor};
