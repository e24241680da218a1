//! Dense-network numerical core: tensors, MLPs, Adam and seeded randomness.

mod checkpoint;
mod mlp;
mod params;
mod rng;
mod tensor;

pub use checkpoint::{format_real, Checkpoint};
pub use mlp::{sigmoid, Activation, Mlp, MlpSpec};
pub use params::{adam_step, Adam, ParamEntry, ParamStore};
pub use rng::{streams, Rng};
pub use tensor::Tensor2;
pub(crate) use checkpoint::write_real_array;
