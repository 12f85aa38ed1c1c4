//! Saliency-prompt pre-training for kernel-based instance segmentation heads.

pub mod error;
pub mod eval;
pub mod head;
pub mod pnm;
pub mod prompting;
pub mod proposal;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub mod pipeline;
