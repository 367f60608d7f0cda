//! Dense differentiable kernel: tensors, a recording tape with exact
//! reverse-mode gradients, a named parameter store and Adam.

mod params;
mod tape;
mod tensor;

pub use params::{init_uniform, seed_rng, AdamConfig, Param, ParamStore, Rng};
pub use tape::{Gradients, Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

