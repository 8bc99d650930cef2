//! Normalised data directory: graph, templates, optional aliases and the
//! three dialog splits.

use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use crate::corpus::{
    load_corpus, serialize_corpus, split_dialogs, Dialog, RelationTemplates, ToyWorld,
};
use crate::error::{DicrError, Result};
use crate::kg::{AliasTable, KnowledgeGraph};

pub const KG_FILE: &str = "kg.tsv";
pub const TEMPLATES_FILE: &str = "templates.tsv";
pub const ALIASES_FILE: &str = "aliases.tsv";
/// Suggested training configuration shipped with a data directory.
pub const PRESET_FILE: &str = "train.conf";
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone)]
pub struct DataSet {
    pub kg: KnowledgeGraph,
    pub templates: RelationTemplates,
    pub aliases: Option<AliasTable>,
    pub train: Vec<Dialog>,
    pub valid: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

fn split_file(name: &str) -> String {
    format!("{name}.jsonl")
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| DicrError::path(path, e))?;
    Ok(path.to_path_buf())
}

impl DataSet {
    pub fn from_dialogs(
        kg: KnowledgeGraph,
        templates: RelationTemplates,
        aliases: Option<AliasTable>,
        dialogs: Vec<Dialog>,
        ratios: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        let s = split_dialogs(dialogs, ratios, seed)?;
        Ok(DataSet {
            kg,
            templates,
            aliases,
            train: s.train,
            valid: s.valid,
            test: s.test,
        })
    }

    pub fn from_world(world: ToyWorld, ratios: [f64; 3], seed: u64) -> Result<Self> {
        Self::from_dialogs(world.kg, world.templates, None, world.dialogs, ratios, seed)
    }

    /// Reads a raw graph and corpus; `templates.tsv` and `aliases.tsv` next to
    /// the graph file are picked up when present.
    pub fn prepare(
        kg_path: &Path,
        corpus_path: &Path,
        ratios: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        let kg = KnowledgeGraph::load_tsv(kg_path)?;
        let corpus = load_corpus(corpus_path, &kg)?;
        let dir = kg_path.parent().unwrap_or(Path::new("."));
        let templates = match dir.join(TEMPLATES_FILE) {
            p if p.is_file() => RelationTemplates::load_tsv(&p)?,
            _ => RelationTemplates::new(),
        };
        let aliases = match dir.join(ALIASES_FILE) {
            p if p.is_file() => Some(AliasTable::load_tsv(&p)?),
            _ => None,
        };
        Self::from_dialogs(kg, templates, aliases, corpus.dialogs, ratios, seed)
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| DicrError::path(dir, e))?;
        let mut out = vec![
            write(&dir.join(KG_FILE), &self.kg.to_tsv())?,
            write(&dir.join(TEMPLATES_FILE), &self.templates.to_tsv())?,
        ];
        if let Some(a) = &self.aliases {
            let text: String = a
                .entries
                .iter()
                .map(|(k, v)| format!("{k}\t{v}\n"))
                .collect();
            out.push(write(&dir.join(ALIASES_FILE), &text)?);
        }
        for name in SPLITS {
            let text = serialize_corpus(self.split(name)?, &self.kg);
            out.push(write(&dir.join(split_file(name)), &text)?);
        }
        Ok(out)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kg = KnowledgeGraph::load_tsv(&dir.join(KG_FILE))?;
        let templates = RelationTemplates::load_tsv(&dir.join(TEMPLATES_FILE))?;
        let alias_path = dir.join(ALIASES_FILE);
        let aliases = if alias_path.is_file() {
            Some(AliasTable::load_tsv(&alias_path)?)
        } else {
            None
        };
        let mut splits = Vec::with_capacity(3);
        for name in SPLITS {
            splits.push(load_corpus(&dir.join(split_file(name)), &kg)?.dialogs);
        }
        let test = splits.pop().expect("three splits");
        let valid = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(DataSet {
            kg,
            templates,
            aliases,
            train,
            valid,
            test,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Dialog]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(DicrError::Lookup {
                kind: "split",
                name: other.to_string(),
            }),
        }
    }

    /// Hash of the graph and every split's serialised dialogs.
    pub fn content_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.kg.fingerprint().hash(&mut h);
        self.templates.to_tsv().hash(&mut h);
        for d in [&self.train, &self.valid, &self.test] {
            serialize_corpus(d, &self.kg).hash(&mut h);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_world, ToyConfig};

    #[test]
    fn save_load_round_trip_keeps_content() {
        let world = generate_toy_world(&ToyConfig {
            seed: 3,
            num_entities: 20,
            num_relations: 3,
            num_dialogs: 12,
        })
        .unwrap();
        let data = DataSet::from_world(world, [0.7, 0.15, 0.15], 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.save(dir.path()).unwrap();
        let back = DataSet::load(dir.path()).unwrap();
        assert_eq!(back.content_hash(), data.content_hash());
        assert_eq!(back.train.len() + back.valid.len() + back.test.len(), 12);
        assert!(data.split("dev").is_err());
    }
}
