//! Minimal neural-network toolkit: dense/normalization/attention layers and
//! transformer blocks with hand-derived backward passes, plus the strided
//! convolution used by the realism probe.
//!
//! Every layer exposes `forward` returning the activations needed for the
//! exact gradient, `backward` returning `(input gradient, parameter
//! gradients)` in a container of the layer's own type, and `params` /
//! `params_mut` for deterministic named traversal (optimizer, checkpoints,
//! gradient checks).

pub mod attention;
pub mod block;
pub mod conv;
pub mod init;
pub mod linear;
pub mod ops;

pub use attention::{CrossAttention, MultiHeadAttention};
pub use block::{backward_stack, run_stack, Block, BlockCache};
pub use conv::Conv2d;
pub use linear::{Embedding, LayerNorm, Linear};
