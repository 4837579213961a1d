//! Numerical kernel: feedforward networks with hand-derived gradients,
//! AdamW, expectile loss, Polyak averaging and gradient checking.

pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod params;

pub use loss::{expectile_loss, softmax, softmax_cross_entropy};
pub use mlp::{Cache, Mlp};
pub use optim::{adamw_step, polyak_update, AdamWConfig, OptState};
pub use params::{NumericsError, ParamSet, Tensor};
