//! Minimal neural-network toolkit: parameters, reverse-mode tape, layers and Adam.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use layers::{AdditiveAttention, AttentionKeys, BiGru, Encoded, GruCell, Linear};
pub use params::{Init, ParamId, ParamStore, Tensor};
pub use tape::{elu, log_sum_exp, sigmoid, softmax, Gradients, ParamGrad, Tape, Var};
