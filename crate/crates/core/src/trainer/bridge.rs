//! Conversation-side rewards fed back into the reasoner during joint training.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::converse::{semantic_encoding, semantic_score, ConverseModel, MIM_EPS};
use crate::corpus::{tokenize_path, RelationTemplates, WordVocab};
use crate::error::Result;
use crate::kg::{EntityId, KnowledgeGraph, ReasonPath, RelationId};
use crate::reasoner::{BridgeRewards, RewardTransform};

/// Clamp applied to posterior weights before the log transform.
pub const BRIDGE_EPS: f64 = 1e-6;

/// Reward for a finished path: the transformed posterior weight of the beam
/// entry with the same route, or 0 when the path is not in the beam.
pub fn bridge_knowledge_reward(
    path: &ReasonPath,
    beam: &[ReasonPath],
    mu: &[f64],
    transform: RewardTransform,
) -> f64 {
    beam.iter()
        .zip(mu)
        .find(|(b, _)| b.same_route(path))
        .map_or(0.0, |(_, &m)| {
            transform.apply(m.clamp(BRIDGE_EPS, 1.0 - BRIDGE_EPS))
        })
}

/// Reward for one verbalised path segment against the gold statement
/// encoding `o_u`; 0 without a statement.
pub fn bridge_semantic_reward(
    model: &ConverseModel,
    vocab: &WordVocab,
    segment: &[String],
    o_u: Option<&[f64]>,
    transform: RewardTransform,
) -> Result<f64> {
    let Some(o_u) = o_u else {
        log::debug!("semantic reward requested without a gold statement");
        return Ok(0.0);
    };
    let x = semantic_encoding(model, &vocab.encode(segment))?;
    Ok(transform.apply(semantic_score(model, &x, o_u)?.clamp(MIM_EPS, 1.0 - MIM_EPS)))
}

/// Per-turn beams, posteriors and statement encodings for one joint epoch.
pub struct JointBridge<'a> {
    pub model: &'a ConverseModel,
    pub vocab: &'a WordVocab,
    pub kg: &'a KnowledgeGraph,
    pub templates: &'a RelationTemplates,
    pub transform: RewardTransform,
    pub beams: &'a [Vec<ReasonPath>],
    pub posteriors: &'a [Vec<f64>],
    pub statements: &'a [Option<Vec<f64>>],
    /// Segment encodings depend only on the hop, so they are shared across turns.
    cache: Mutex<HashMap<(EntityId, RelationId, EntityId), Vec<f64>>>,
}

impl<'a> JointBridge<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a ConverseModel,
        vocab: &'a WordVocab,
        kg: &'a KnowledgeGraph,
        templates: &'a RelationTemplates,
        transform: RewardTransform,
        beams: &'a [Vec<ReasonPath>],
        posteriors: &'a [Vec<f64>],
        statements: &'a [Option<Vec<f64>>],
    ) -> Self {
        JointBridge {
            model,
            vocab,
            kg,
            templates,
            transform,
            beams,
            posteriors,
            statements,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn segment_encoding(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&(h, r, t)) {
            return Ok(v.clone());
        }
        let tokens = tokenize_path(
            &ReasonPath::from_hops(h, &[(r, t)]),
            self.kg,
            self.templates,
        );
        let v = semantic_encoding(self.model, &self.vocab.encode(&tokens))?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert((h, r, t), v.clone());
        Ok(v)
    }
}

impl BridgeRewards for JointBridge<'_> {
    fn knowledge(&self, index: usize, path: &ReasonPath) -> f64 {
        match (self.beams.get(index), self.posteriors.get(index)) {
            (Some(b), Some(mu)) => bridge_knowledge_reward(path, b, mu, self.transform),
            _ => 0.0,
        }
    }

    fn semantic(&self, index: usize, head: EntityId, relation: RelationId, tail: EntityId) -> f64 {
        let Some(o_u) = self.statements.get(index).and_then(Option::as_deref) else {
            return 0.0;
        };
        let score = self
            .segment_encoding(head, relation, tail)
            .and_then(|x| semantic_score(self.model, &x, o_u));
        match score {
            Ok(s) => self.transform.apply(s.clamp(MIM_EPS, 1.0 - MIM_EPS)),
            Err(e) => {
                log::warn!("semantic reward unavailable: {e}");
                0.0
            }
        }
    }
}
