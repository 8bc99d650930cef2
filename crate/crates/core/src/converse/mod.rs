//! Recommendation-aware response generation: sequence encoders, knowledge
//! imitation over candidate paths, semantic imitation, and a pointer decoder
//! that copies from the paths.

pub mod config;
pub mod generate;
pub mod input;
pub mod model;
pub mod train;

pub use config::ConverseConfig;
pub use generate::{
    generate, path_posterior, semantic_encoding, semantic_score, Decoding, Generated,
};
pub use input::{prepare_input, ConverseInput, PathTokens};
pub use model::{
    ConverseModel, DecodeContext, Mode, PathWeights, StepOut, TurnEncoding, MIM_EPS, NLL_FLOOR,
    PRIOR_FLOOR,
};
pub use train::{
    batch_gradients, make_batches, mim_loss, negative_pairing, train_converse, train_epoch,
    turn_losses, ConverseTrainConfig, LossBreakdown, Objective, TurnLosses,
};
