//! Gold interest-shift paths: shortest walks from a context entity to a
//! recommended item.
//!
//! Ties are broken by path length, then by the earliest-mentioned start
//! entity, then by the lexicographically smallest relation sequence, then by
//! the entity sequence.

use std::collections::HashMap;

use super::templates::{tokenize_path, RelationTemplates};
use crate::kg::{EntityId, KnowledgeGraph, ReasonPath, RelationId};

/// A gold path with its verbalised statement.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldShiftPath {
    pub path: ReasonPath,
    pub statement: Vec<String>,
}

impl GoldShiftPath {
    pub fn new(path: ReasonPath, kg: &KnowledgeGraph, templates: &RelationTemplates) -> Self {
        let statement = tokenize_path(&path, kg, templates);
        GoldShiftPath { path, statement }
    }
}

/// Shortest paths (up to `max_len` hops) from `start` to every reachable
/// entity, choosing the lexicographically smallest `(relation, entity)`
/// sequence among equally short ones.
pub fn shortest_paths_from(
    kg: &KnowledgeGraph,
    start: EntityId,
    max_len: usize,
) -> HashMap<EntityId, Vec<(RelationId, EntityId)>> {
    let mut best: HashMap<EntityId, Vec<(RelationId, EntityId)>> = HashMap::new();
    best.insert(start, Vec::new());
    // Frontier stays sorted by path key because parents are expanded in key
    // order and their edges in (relation, tail) order.
    let mut frontier = vec![start];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for &node in &frontier {
            let Ok(edges) = kg.outgoing(node) else {
                continue;
            };
            for &(r, t) in edges {
                if best.contains_key(&t) {
                    continue;
                }
                let mut hops = best[&node].clone();
                hops.push((r, t));
                best.insert(t, hops);
                next.push(t);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    best.remove(&start);
    best
}

fn dedup_in_order(xs: &[EntityId]) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for x in xs {
        if !out.contains(x) {
            out.push(*x);
        }
    }
    out
}

/// Tie-break key: hop count, start position, relation ids, entity ids.
type Rank = (usize, usize, Vec<RelationId>, Vec<EntityId>);

/// Best path to each target (in target order); targets unreachable within
/// `max_len` hops are skipped.
pub fn gold_paths_per_target(
    kg: &KnowledgeGraph,
    context_entities: &[EntityId],
    targets: &[EntityId],
    max_len: usize,
) -> Vec<ReasonPath> {
    let starts = dedup_in_order(context_entities);
    let reach: Vec<_> = starts
        .iter()
        .map(|s| shortest_paths_from(kg, *s, max_len))
        .collect();
    let mut out = Vec::new();
    for target in dedup_in_order(targets) {
        let mut best: Option<(Rank, ReasonPath)> = None;
        for (si, s) in starts.iter().enumerate() {
            let Some(hops) = reach[si].get(&target) else {
                continue;
            };
            let rels: Vec<RelationId> = hops.iter().map(|h| h.0).collect();
            let ents: Vec<EntityId> = hops.iter().map(|h| h.1).collect();
            let key = (hops.len(), si, rels, ents);
            if best.as_ref().is_none_or(|b| key < b.0) {
                best = Some((key, ReasonPath::from_hops(*s, hops)));
            }
        }
        if let Some((_, path)) = best {
            out.push(path);
        }
    }
    out
}

/// The canonical gold path over all targets, if any target is reachable.
pub fn extract_gold_path(
    kg: &KnowledgeGraph,
    context_entities: &[EntityId],
    targets: &[EntityId],
    max_len: usize,
) -> Option<ReasonPath> {
    let starts = dedup_in_order(context_entities);
    let rank = |p: &ReasonPath| {
        let si = starts
            .iter()
            .position(|s| *s == p.origin())
            .unwrap_or(usize::MAX);
        (p.len(), si, p.relations.clone(), p.entities.clone())
    };
    gold_paths_per_target(kg, context_entities, targets, max_len)
        .into_iter()
        .min_by(|a, b| rank(a).cmp(&rank(b)))
}
