//! Numeric substrate: dense and sparse kernels, initialization, losses and
//! the optimizer. Storage is `f32`; reductions accumulate in `f64`.

mod activation;
mod adam;
mod dense;
mod init;
mod loss;
mod sparse;

pub use activation::{prelu, prelu_backward, sigmoid, sigmoid64, Activation, LEAKY_SLOPE, PRELU_INIT};
pub use adam::{adam_step, AdamScalar, AdamState};
pub use dense::DenseMatrix;
pub use init::{xavier_bound, xavier_uniform};
pub use loss::bce_with_logits;
pub use sparse::{spmm, spmm_into, SparseRows};
