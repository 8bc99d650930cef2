use super::graph::{EntityId, KnowledgeGraph, RelationId};

/// A walk `e_0 -r_1-> e_1 ... -r_t-> e_t` over the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonPath {
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    /// Cumulative log policy probability (zero for extracted paths).
    pub score: f64,
    pub terminal: bool,
}

impl ReasonPath {
    pub fn start(e0: EntityId) -> Self {
        ReasonPath {
            entities: vec![e0],
            relations: Vec::new(),
            score: 0.0,
            terminal: false,
        }
    }

    pub fn from_hops(e0: EntityId, hops: &[(RelationId, EntityId)]) -> Self {
        let mut p = Self::start(e0);
        for &(r, e) in hops {
            p.relations.push(r);
            p.entities.push(e);
        }
        p
    }

    pub fn origin(&self) -> EntityId {
        self.entities[0]
    }

    pub fn last(&self) -> EntityId {
        *self.entities.last().expect("path has at least one entity")
    }

    /// Number of relation hops.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn extend(&self, r: RelationId, e: EntityId, log_prob: f64) -> Self {
        let mut p = self.clone();
        p.relations.push(r);
        p.entities.push(e);
        p.score += log_prob;
        p
    }

    /// `(head, relation, tail)` for every hop.
    pub fn hops(&self) -> impl Iterator<Item = (EntityId, RelationId, EntityId)> + '_ {
        self.relations
            .iter()
            .enumerate()
            .map(move |(i, r)| (self.entities[i], *r, self.entities[i + 1]))
    }

    /// Same entity/relation route, ignoring score and terminal flag.
    pub fn same_route(&self, other: &ReasonPath) -> bool {
        self.entities == other.entities && self.relations == other.relations
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.entities.contains(&e)
    }

    /// Every hop is a graph triplet and entities are pairwise distinct.
    pub fn is_valid(&self, kg: &KnowledgeGraph) -> bool {
        if self.entities.len() != self.relations.len() + 1 {
            return false;
        }
        let mut seen = std::collections::HashSet::new();
        if !self.entities.iter().all(|e| seen.insert(*e)) {
            return false;
        }
        self.hops().all(|(h, r, t)| kg.contains(h, r, t))
    }
}
