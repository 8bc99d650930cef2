//! Candidate actions: unvisited outgoing edges plus the terminating self-loop.

use crate::error::{DicrError, Result};
use crate::kg::{EmbeddingTable, EntityId, KnowledgeGraph, ReasonPath, RelationId};

/// Follow `relation` to `entity`; `relation == None` is the self-loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub relation: Option<RelationId>,
    pub entity: EntityId,
}

impl Action {
    pub fn self_loop(at: EntityId) -> Self {
        Action {
            relation: None,
            entity: at,
        }
    }

    pub fn edge(r: RelationId, e: EntityId) -> Self {
        Action {
            relation: Some(r),
            entity: e,
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.relation.is_none()
    }
}

/// Candidates in `(relation, entity)` order with the self-loop last.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    pub actions: Vec<Action>,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn position(&self, a: &Action) -> Option<usize> {
        self.actions.iter().position(|x| x == a)
    }

    pub fn edges(&self) -> &[Action] {
        &self.actions[..self.actions.len() - 1]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn action_space(
    kg: &KnowledgeGraph,
    path: &ReasonPath,
    cap: usize,
    preference: &[f64],
    emb: &EmbeddingTable,
) -> Result<ActionSpace> {
    if cap == 0 {
        return Err(DicrError::config("action cap must be at least 1"));
    }
    let here = path.last();
    let mut edges: Vec<Action> = kg
        .outgoing(here)?
        .iter()
        .filter(|(_, e)| !path.contains_entity(*e))
        .map(|&(r, e)| Action::edge(r, e))
        .collect();
    if edges.len() > cap - 1 {
        let mut scored: Vec<(f64, Action)> = edges
            .iter()
            .map(|a| {
                let s = if a.entity.0 < emb.entities.rows {
                    dot(emb.entities.row(a.entity.0), preference)
                } else {
                    0.0
                };
                (s, *a)
            })
            .collect();
        scored.sort_by(|x, y| {
            y.0.total_cmp(&x.0)
                .then_with(|| (x.1.relation, x.1.entity).cmp(&(y.1.relation, y.1.entity)))
        });
        edges = scored.into_iter().take(cap - 1).map(|(_, a)| a).collect();
        edges.sort_by_key(|a| (a.relation, a.entity));
    }
    edges.push(Action::self_loop(here));
    Ok(ActionSpace { actions: edges })
}
