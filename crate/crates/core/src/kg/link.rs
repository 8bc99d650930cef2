//! Entity linking by case-folded, punctuation-stripped exact match over
//! entity labels and an optional alias table. Matches are the longest
//! non-overlapping spans scanned left to right.

use std::collections::HashMap;
use std::path::Path;

use super::graph::{EntityId, KnowledgeGraph};
use crate::error::{DicrError, Result};

/// A linked mention covering tokens `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entity: EntityId,
}

/// Lower-cases and strips punctuation (underscores are kept).
pub fn normalize_token(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '_')
        .flat_map(char::to_lowercase)
        .collect()
}

fn normalize_phrase(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

/// `alias<TAB>entity-label` pairs.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    pub entries: Vec<(String, String)>,
}

impl AliasTable {
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
                return Err(DicrError::Parse {
                    line: i + 1,
                    msg: "expected `alias<TAB>entity-label`".into(),
                });
            }
            entries.push((fields[0].trim().to_string(), fields[1].trim().to_string()));
        }
        Ok(AliasTable { entries })
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse_tsv(&text)
    }
}

/// Precomputed phrase index for repeated linking against one graph.
#[derive(Debug, Clone)]
pub struct EntityLinker {
    phrases: HashMap<Vec<String>, EntityId>,
    max_len: usize,
}

impl EntityLinker {
    pub fn new(kg: &KnowledgeGraph, aliases: Option<&AliasTable>) -> Self {
        let mut phrases = HashMap::new();
        let mut max_len = 0;
        // Labels first so they take precedence over aliases; earlier ids win collisions.
        for (i, label) in kg.entities().labels().iter().enumerate() {
            let key = normalize_phrase(label);
            if key.is_empty() {
                continue;
            }
            max_len = max_len.max(key.len());
            phrases.entry(key).or_insert(EntityId(i));
        }
        if let Some(aliases) = aliases {
            for (alias, label) in &aliases.entries {
                let Some(e) = kg.entity(label) else {
                    log::warn!("alias `{alias}` points at unknown entity `{label}`");
                    continue;
                };
                let key = normalize_phrase(alias);
                if key.is_empty() {
                    continue;
                }
                max_len = max_len.max(key.len());
                phrases.entry(key).or_insert(e);
            }
        }
        EntityLinker { phrases, max_len }
    }

    pub fn link<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Mention> {
        let norm: Vec<String> = tokens.iter().map(|t| normalize_token(t.as_ref())).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < norm.len() {
            if norm[i].is_empty() {
                i += 1;
                continue;
            }
            let longest = self.max_len.min(norm.len() - i);
            let found = (1..=longest).rev().find_map(|len| {
                let window = &norm[i..i + len];
                if window.iter().any(String::is_empty) {
                    return None;
                }
                self.phrases.get(window).map(|e| (len, *e))
            });
            match found {
                Some((len, entity)) => {
                    out.push(Mention {
                        start: i,
                        end: i + len,
                        entity,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// One-shot linking; build an [`EntityLinker`] when linking many texts.
pub fn link_entities<S: AsRef<str>>(
    tokens: &[S],
    kg: &KnowledgeGraph,
    aliases: Option<&AliasTable>,
) -> Vec<Mention> {
    EntityLinker::new(kg, aliases).link(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kg() -> KnowledgeGraph {
        KnowledgeGraph::from_records([
            ("Thor", "written_by", "Stan Lee"),
            ("Stan", "related_to", "Thor"),
            ("Iron Man 3", "starred_actors", "Robert Downey Jr."),
        ])
        .unwrap()
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn case_folded_match() {
        let kg = kg();
        let m = link_entities(&toks("i loved thor"), &kg, None);
        assert_eq!(
            m,
            vec![Mention {
                start: 2,
                end: 3,
                entity: kg.entity("Thor").unwrap()
            }]
        );
    }

    #[test]
    fn longest_match_wins() {
        let kg = kg();
        let m = link_entities(&toks("stan lee wrote it"), &kg, None);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].entity, kg.entity("Stan Lee").unwrap());
        assert_eq!((m[0].start, m[0].end), (0, 2));
    }

    #[test]
    fn no_match_is_empty() {
        assert!(link_entities(&toks("nothing to see here"), &kg(), None).is_empty());
    }

    #[test]
    fn punctuation_is_ignored() {
        let kg = kg();
        let m = link_entities(&toks("watch Iron Man 3 , with robert downey jr"), &kg, None);
        let ids: Vec<_> = m.iter().map(|m| m.entity).collect();
        assert_eq!(
            ids,
            vec![
                kg.entity("Iron Man 3").unwrap(),
                kg.entity("Robert Downey Jr.").unwrap()
            ]
        );
    }

    #[test]
    fn aliases_link_to_their_entity() {
        let kg = kg();
        let aliases = AliasTable::parse_tsv("rdj\tRobert Downey Jr.\n").unwrap();
        let m = link_entities(&toks("i like RDJ"), &kg, Some(&aliases));
        assert_eq!(m[0].entity, kg.entity("Robert Downey Jr.").unwrap());
    }

    proptest! {
        #[test]
        fn spans_never_overlap(words in prop::collection::vec(prop::sample::select(vec!["thor", "stan", "lee", "iron", "man", "3", "the", ","]), 0..30)) {
            let kg = kg();
            let m = link_entities(&words, &kg, None);
            for w in m.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for x in &m {
                prop_assert!(x.entity.0 < kg.num_entities());
                prop_assert!(x.start < x.end && x.end <= words.len());
            }
        }
    }
}
