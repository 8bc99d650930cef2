use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::error::{DicrError, Result};

/// Dense entity index into a [`KnowledgeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub usize);

/// Dense relation index into a [`KnowledgeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

impl EntityId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// String labels with dense ids assigned in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// An immutable directed multi-relational graph.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    triplets: Vec<Triplet>,
    triplet_set: HashSet<Triplet>,
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
}

impl KnowledgeGraph {
    /// Builds a graph from `(head, relation, tail)` label records.
    ///
    /// Ids follow first-occurrence order; duplicate triplets are dropped.
    pub fn from_records<I, S>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut kg = KnowledgeGraph::default();
        for (line, (h, r, t)) in records.into_iter().enumerate() {
            let (h, r, t) = (h.as_ref().trim(), r.as_ref().trim(), t.as_ref().trim());
            if h.is_empty() || r.is_empty() || t.is_empty() {
                return Err(DicrError::Parse {
                    line: line + 1,
                    msg: "empty label in triplet".into(),
                });
            }
            kg.insert(h, r, t);
        }
        if kg.triplets.is_empty() {
            return Err(DicrError::config("knowledge graph has no triplets"));
        }
        kg.finish();
        Ok(kg)
    }

    /// Parses the TSV format `head<TAB>relation<TAB>tail`, one triplet per line.
    /// Blank lines are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(DicrError::Parse {
                    line: i + 1,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(DicrError::Parse {
                    line: i + 1,
                    msg: "empty label in triplet".into(),
                });
            }
            records.push((fields[0], fields[1], fields[2]));
        }
        Self::from_records(records)
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triplets {
            out.push_str(self.entity_label(t.head));
            out.push('\t');
            out.push_str(self.relation_label(t.relation));
            out.push('\t');
            out.push_str(self.entity_label(t.tail));
            out.push('\n');
        }
        out
    }

    fn insert(&mut self, h: &str, r: &str, t: &str) {
        let triplet = Triplet {
            head: EntityId(self.entities.intern(h)),
            relation: RelationId(self.relations.intern(r)),
            tail: EntityId(self.entities.intern(t)),
        };
        if self.triplet_set.insert(triplet) {
            self.triplets.push(triplet);
        }
    }

    fn finish(&mut self) {
        let mut adjacency = vec![Vec::new(); self.entities.len()];
        for t in &self.triplets {
            adjacency[t.head.0].push((t.relation, t.tail));
        }
        for edges in &mut adjacency {
            edges.sort_unstable();
        }
        self.adjacency = adjacency;
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triplets(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }

    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.triplet_set.contains(&Triplet {
            head: h,
            relation: r,
            tail: t,
        })
    }

    /// True when a triplet links `a` and `b` in either direction.
    pub fn connected(&self, a: EntityId, b: EntityId) -> bool {
        let has = |x: EntityId, y: EntityId| {
            self.adjacency
                .get(x.0)
                .is_some_and(|edges| edges.iter().any(|(_, t)| *t == y))
        };
        has(a, b) || has(b, a)
    }

    /// Outgoing `(relation, tail)` edges sorted by relation id, then tail id.
    pub fn outgoing(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.adjacency
            .get(e.0)
            .map(Vec::as_slice)
            .ok_or_else(|| DicrError::Lookup {
                kind: "entity",
                name: e.to_string(),
            })
    }

    /// Order-independent fingerprint of the graph content.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.entities.labels.hash(&mut h);
        self.relations.labels.hash(&mut h);
        self.triplets.hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_triplet() {
        let kg = KnowledgeGraph::from_records([("Thor", "written_by", "Stan Lee")]).unwrap();
        assert_eq!(kg.num_entities(), 2);
        assert_eq!(kg.num_relations(), 1);
        assert_eq!(kg.num_triplets(), 1);
        assert_eq!(kg.entity("Thor"), Some(EntityId(0)));
        assert_eq!(kg.entity("Stan Lee"), Some(EntityId(1)));
    }

    #[test]
    fn duplicates_are_dropped() {
        let kg = KnowledgeGraph::from_records([
            ("Thor", "written_by", "Stan Lee"),
            ("Thor", "written_by", "Stan Lee"),
        ])
        .unwrap();
        assert_eq!(kg.num_triplets(), 1);
    }

    #[test]
    fn wrong_arity_reports_line() {
        let err = KnowledgeGraph::parse_tsv("a\tr\tb\nc\tr\n").unwrap_err();
        match err {
            DicrError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(KnowledgeGraph::parse_tsv("\n\n").is_err());
    }

    #[test]
    fn outgoing_is_sorted_and_leaf_is_empty() {
        let kg =
            KnowledgeGraph::from_records([("x", "r2", "b"), ("x", "r1", "a"), ("a", "r2", "b")])
                .unwrap();
        let x = kg.entity("x").unwrap();
        let edges = kg.outgoing(x).unwrap();
        // r2 was seen first, so it has the smaller id.
        let r1 = kg.relation("r1").unwrap();
        let r2 = kg.relation("r2").unwrap();
        assert!(r2 < r1);
        assert_eq!(
            edges,
            &[(r2, kg.entity("b").unwrap()), (r1, kg.entity("a").unwrap())]
        );
        assert!(kg.outgoing(kg.entity("b").unwrap()).unwrap().is_empty());
        assert!(kg.outgoing(EntityId(99)).is_err());
    }

    #[test]
    fn large_fan_out_is_fully_returned() {
        let records: Vec<(String, String, String)> = (0..300)
            .map(|i| ("hub".to_string(), format!("r{}", i % 7), format!("n{i}")))
            .collect();
        let kg = KnowledgeGraph::from_records(records).unwrap();
        assert_eq!(kg.outgoing(kg.entity("hub").unwrap()).unwrap().len(), 300);
    }

    #[test]
    fn tsv_round_trip() {
        let kg = KnowledgeGraph::parse_tsv("a\tr\tb\nb\ts\tc\n").unwrap();
        let again = KnowledgeGraph::parse_tsv(&kg.to_tsv()).unwrap();
        assert_eq!(kg.fingerprint(), again.fingerprint());
    }

    proptest! {
        #[test]
        fn adjacency_reflects_triplets(edges in prop::collection::vec((0usize..12, 0usize..4, 0usize..12), 1..60)) {
            let records: Vec<(String, String, String)> = edges
                .iter()
                .map(|(h, r, t)| (format!("n{h}"), format!("r{r}"), format!("n{t}")))
                .collect();
            let kg = KnowledgeGraph::from_records(records).unwrap();
            for e in 0..kg.num_entities() {
                let out: HashSet<_> = kg.outgoing(EntityId(e)).unwrap().iter().copied().collect();
                let want: HashSet<_> = kg
                    .triplets()
                    .iter()
                    .filter(|t| t.head == EntityId(e))
                    .map(|t| (t.relation, t.tail))
                    .collect();
                prop_assert_eq!(out, want);
            }
        }
    }
}
