//! Minimal deterministic dense-network kernel.
//!
//! Just the pieces the ranking model needs: row-major f64 matrices, affine /
//! ELU / sigmoid / row-softmax / embedding-lookup / elementwise-multiply /
//! concat / per-field-mean primitives with hand-written backward passes, the
//! two losses, and Adam. There is no autodiff tape; the model composes these
//! directly, which keeps every gradient auditable against finite
//! differences.
//!
//! Everything is single-threaded and allocation-explicit: a fixed seed gives
//! bit-identical parameters after any number of steps.

mod adam;
mod layers;
mod loss;
mod tensor;

pub use adam::{AdamHyperParams, AdamState};
pub use layers::{
    affine_backward, affine_forward, concat_cols, elu_backward, elu_forward, embedding_backward,
    embedding_forward, mul_backward, mul_forward, reduce_mean_per_field_backward,
    reduce_mean_per_field_forward, sigmoid_backward, sigmoid_forward, softmax_rows_backward,
    softmax_rows_forward, split_cols, LayerKind,
};
pub use loss::{bce_grad_wrt_logit, bce_loss, softmax_ce_grad_wrt_logit, softmax_ce_loss};
pub use tensor::Tensor2D;

#[cfg(test)]
mod grad_check;
