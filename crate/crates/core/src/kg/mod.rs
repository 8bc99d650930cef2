//! Knowledge-graph storage, translational embeddings, entity linking and user preference.

pub mod embed;
pub mod graph;
pub mod link;
pub mod path;
pub mod preference;

pub use embed::{train_embeddings, EmbeddingTable, TrainedEmbeddings, TransEConfig};
pub use graph::{EntityId, KnowledgeGraph, RelationId, Triplet, Vocabulary};
pub use link::{link_entities, normalize_token, AliasTable, EntityLinker, Mention};
pub use path::ReasonPath;
pub use preference::{user_preference, UserPreference};
