//! Verbalisation of reasoning paths into knowledge statements.
//!
//! Each hop becomes one clause ending in `.`. Relations with an entry in the
//! template table use it (`{h}` and `{t}` stand for the head and tail labels);
//! otherwise relations named `*_by` read passively (`{h} is written by {t}`)
//! and the rest read `{h} <relation words> {t}`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{DicrError, Result};
use crate::kg::{KnowledgeGraph, ReasonPath};

#[derive(Debug, Clone, Default)]
pub struct RelationTemplates {
    templates: HashMap<String, String>,
}

impl RelationTemplates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, relation: &str, template: &str) -> Result<()> {
        if !template.contains("{h}") || !template.contains("{t}") {
            return Err(DicrError::config(format!(
                "template for `{relation}` must contain {{h}} and {{t}}"
            )));
        }
        self.templates
            .insert(relation.to_string(), template.to_string());
        Ok(())
    }

    /// `relation<TAB>template` lines.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((rel, tpl)) = line.split_once('\t') else {
                return Err(DicrError::Parse {
                    line: i + 1,
                    msg: "expected `relation<TAB>template`".into(),
                });
            };
            out.insert(rel.trim(), tpl.trim())
                .map_err(|e| DicrError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(out)
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.templates.iter().collect();
        rows.sort();
        rows.iter().map(|(r, t)| format!("{r}\t{t}\n")).collect()
    }

    pub fn template_for(&self, relation: &str) -> String {
        if let Some(t) = self.templates.get(relation) {
            return t.clone();
        }
        let words = relation.replace('_', " ");
        if let Some(stem) = relation.strip_suffix("_by") {
            if !stem.is_empty() {
                return format!("{{h}} is {words} {{t}}");
            }
        }
        format!("{{h}} {words} {{t}}")
    }

    /// One clause for a hop, as whitespace tokens ending in `.`.
    pub fn clause(&self, head: &str, relation: &str, tail: &str) -> Vec<String> {
        let filled = self
            .template_for(relation)
            .replace("{h}", head)
            .replace("{t}", tail);
        let mut toks: Vec<String> = filled.split_whitespace().map(str::to_string).collect();
        toks.push(".".to_string());
        toks
    }
}

/// Statement tokens for a path; a path with no hops yields no tokens.
pub fn tokenize_path(
    path: &ReasonPath,
    kg: &KnowledgeGraph,
    templates: &RelationTemplates,
) -> Vec<String> {
    path.hops()
        .flat_map(|(h, r, t)| {
            templates.clause(kg.entity_label(h), kg.relation_label(r), kg.entity_label(t))
        })
        .collect()
}
