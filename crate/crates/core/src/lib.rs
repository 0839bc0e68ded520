//! Group-discrimination self-supervised node embeddings.

pub mod bench;
pub mod discriminate;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod inference;
pub mod perturb;
pub mod probe;
pub mod rng;
pub mod sampler;
pub mod tensor;

pub use error::{GgdError, Result};
