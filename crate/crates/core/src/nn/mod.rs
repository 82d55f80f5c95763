//! Small neural-network toolkit: dense tensors, reverse-mode autodiff,
//! transformer encoder layers, Adam and a binary checkpoint format.

mod checkpoint;
mod graph;
mod layers;
mod optim;
mod tensor;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, restore_into, write_checkpoint, write_checkpoint_to, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use graph::{argmax, DiffTensor, Gradients, Graph, Unary, LAYER_NORM_VAR_FLOOR};
pub use layers::{
    Bound, EncoderConfig, EncoderLayer, FeedForward, Init, LayerNorm, Linear, ParamId, ParamStore, SelfAttention,
    TransformerEncoder,
};
pub use optim::{Adam, WarmupSchedule};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
