//! Staged training schedule, the joint stage's reward bridge, evaluation
//! and the interactive session.

pub mod bridge;
pub mod chat;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod models;
pub mod pipeline;

pub use bridge::{bridge_knowledge_reward, bridge_semantic_reward, JointBridge, BRIDGE_EPS};
pub use chat::{tokenize_utterance, ChatSession, Reply, FALLBACK};
pub use config::{Stage, TrainConfig};
pub use data::{DataSet, PRESET_FILE};
pub use evaluate::{eval_records, evaluate, sweep, RANK_DEPTH};
pub use models::{beams, build_vocab, generation_paths, training_inputs, Models, TurnSet};
pub use pipeline::{
    checkpoint_path, JointEpoch, JointSummary, Trainer, CONFIG_FILE, EMBEDDINGS_FILE, REPORT_FILE,
    VOCAB_FILE,
};
