//! Small dense networks trained by hand-written backpropagation, plus the
//! directional output distribution and input normalisation used by the
//! actor-critic learners.

mod adam;
mod checkpoint;
mod mlp;
mod normalizer;
mod vmf;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{elu, elu_derivative, ForwardCache, Mlp};
pub use normalizer::{RunningNormalizer, NORMALIZER_CLIP, NORMALIZER_EPS};
pub use vmf::{
    log_bessel_i0, bessel_ratio_i1_i0, log_sinh, softplus, sigmoid, Vmf, VmfHead, KAPPA_SHIFT,
};

/// Hidden layer widths of the policy network.
pub const ACTOR_HIDDEN: [usize; 2] = [40, 40];
/// Hidden layer widths of the value network.
pub const CRITIC_HIDDEN: [usize; 2] = [100, 100];
