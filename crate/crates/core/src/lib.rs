//! Dual-imitation conversational recommendation over a knowledge graph.
//!
//! The crate is organised as:
//! - [`kg`]: graph storage, translational embeddings, entity linking, user preference;
//! - [`corpus`]: dialog ingestion, gold interest-shift paths, splits, synthetic toy worlds;
//! - [`reasoner`]: the path-reasoning agent (actor, critic, path discriminator, beam search);
//! - [`converse`]: encoders, knowledge/semantic imitation and the path-aware pointer decoder;
//! - [`trainer`]: staged training and the bidirectional joint stage;
//! - [`eval`]: recommendation, generation and explainability metrics, reports and plots.

pub mod checkpoint;
pub mod converse;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod kg;
pub mod nn;
pub mod reasoner;
pub mod trainer;

pub use error::{DicrError, Result};
