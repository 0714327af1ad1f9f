//! Minimal differentiable tensor engine: operations, reverse-mode gradients,
//! Adam, seeded randomness and finite-difference checking.

mod adam;
pub mod gradcheck;
mod kernels;
mod ops;
mod rng;
mod tensor;

pub use adam::{adam_update, clip_grad_norm, AdamState, BETA1, BETA2, EPS};
pub use kernels::gemm;
pub use ops::AttentionSpec;
pub use rng::{Rng, RngState};
pub use tensor::{no_grad, NoGradGuard, Tensor};
