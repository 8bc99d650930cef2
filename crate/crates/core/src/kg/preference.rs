use super::embed::EmbeddingTable;
use super::graph::EntityId;
use crate::error::{DicrError, Result};

/// Mean embedding of the entities mentioned in a conversation context.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPreference {
    pub vector: Vec<f64>,
    pub source_entities: Vec<EntityId>,
}

impl UserPreference {
    /// All-zero preference used when a context mentions no entity.
    pub fn none(dim: usize) -> Self {
        UserPreference {
            vector: vec![0.0; dim],
            source_entities: Vec::new(),
        }
    }
}

pub fn user_preference(
    context_entities: &[EntityId],
    emb: &EmbeddingTable,
) -> Result<UserPreference> {
    if context_entities.is_empty() {
        return Err(DicrError::Precondition(
            "user preference needs at least one context entity".into(),
        ));
    }
    let mut vector = vec![0.0; emb.dim];
    for e in context_entities {
        if e.0 >= emb.entities.rows {
            return Err(DicrError::Lookup {
                kind: "entity",
                name: e.to_string(),
            });
        }
        for (v, x) in vector.iter_mut().zip(emb.entities.row(e.0)) {
            *v += x;
        }
    }
    let n = context_entities.len() as f64;
    vector.iter_mut().for_each(|v| *v /= n);
    Ok(UserPreference {
        vector,
        source_entities: context_entities.to_vec(),
    })
}
