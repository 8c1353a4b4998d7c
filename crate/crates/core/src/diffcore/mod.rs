//! Small dense autodiff engine: rank-2 tensors, an eager reverse-mode
//! tape, Adam, and a JSON checkpoint format.
//!
//! The differentiable primitives are `matmul` (with a `bᵀ` variant),
//! `add`, `mul`, `concat`, `embedding_lookup`, `sigmoid`, `tanh` and a
//! masked `log_softmax`. Losses are assembled with the reductions
//! `select`, `sum`, `scale` and `exp`. There is no broadcasting; a bias
//! row is expanded with [`Tape::repeat_rows`].

mod adam;
mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, Metadata, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var, MASK_VALUE};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::sigmoid;
