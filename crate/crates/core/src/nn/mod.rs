//! Dense ReLU networks with hand-written reverse mode, the two VAE loss
//! terms, and the Adam / RAdam optimizers.

mod loss;
mod mlp;
mod optim;

pub use loss::{bernoulli_nll, kl_uniform_categorical};
pub use mlp::{init_params, mlp_backward, mlp_forward, Layer, MlpCache, MlpParams, ParamGrads};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
