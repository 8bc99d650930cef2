//! Dialog corpus types and the JSONL interchange format.
//!
//! One dialog per line:
//! `{"dialog_id": str, "turns": [{"speaker": "user"|"system", "text": str,
//!   "entities": [{"span": [start, end], "id": str}], "items": [str]}]}`
//! Spans index whitespace tokens of `text`, end exclusive; ids are entity labels.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{DicrError, Result};
use crate::kg::{EntityId, KnowledgeGraph, Mention};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::System => "system",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Speaker::User => "<usr>",
            Speaker::System => "<sys>",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: Vec<String>,
    pub entity_mentions: Vec<Mention>,
    /// Recommended items; only system turns carry them.
    pub recommended_items: Vec<EntityId>,
}

impl Turn {
    pub fn mentioned_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entity_mentions.iter().map(|m| m.entity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub dialog_id: String,
    pub turns: Vec<Turn>,
}

/// Parsed corpus plus the number of mentions/items dropped for unknown entities.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub dialogs: Vec<Dialog>,
    pub dropped_mentions: usize,
}

fn schema(dialog_id: &str, field: &str, msg: impl Into<String>) -> DicrError {
    DicrError::Schema {
        dialog_id: dialog_id.to_string(),
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn parse_dialog(v: &Value, kg: &KnowledgeGraph, dropped: &mut usize) -> Result<Dialog> {
    let dialog_id = v
        .get("dialog_id")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("?", "dialog_id", "missing or not a string"))?
        .to_string();
    let id = dialog_id.as_str();
    let turns_v = v
        .get("turns")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(id, "turns", "missing or not an array"))?;
    if turns_v.is_empty() {
        return Err(schema(id, "turns", "a dialog needs at least one turn"));
    }
    let mut turns = Vec::with_capacity(turns_v.len());
    for (i, tv) in turns_v.iter().enumerate() {
        let field = |f: &str| format!("turns[{i}].{f}");
        let speaker = match tv.get("speaker").and_then(Value::as_str) {
            Some("user") => Speaker::User,
            Some("system") => Speaker::System,
            _ => {
                return Err(schema(
                    id,
                    &field("speaker"),
                    "expected \"user\" or \"system\"",
                ))
            }
        };
        let expected = if i % 2 == 0 {
            Speaker::User
        } else {
            Speaker::System
        };
        if speaker != expected {
            return Err(schema(
                id,
                &field("speaker"),
                "turns must alternate starting with the user",
            ));
        }
        let text: Vec<String> = tv
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(id, &field("text"), "missing or not a string"))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut entity_mentions = Vec::new();
        if let Some(ents) = tv.get("entities") {
            let ents = ents
                .as_array()
                .ok_or_else(|| schema(id, &field("entities"), "not an array"))?;
            for (j, ev) in ents.iter().enumerate() {
                let span = ev
                    .get("span")
                    .and_then(Value::as_array)
                    .filter(|s| s.len() == 2)
                    .and_then(|s| Some((s[0].as_u64()? as usize, s[1].as_u64()? as usize)))
                    .ok_or_else(|| {
                        schema(
                            id,
                            &field(&format!("entities[{j}].span")),
                            "expected [start, end]",
                        )
                    })?;
                if span.0 >= span.1 || span.1 > text.len() {
                    return Err(schema(
                        id,
                        &field(&format!("entities[{j}].span")),
                        format!("span {:?} outside {} tokens", span, text.len()),
                    ));
                }
                let label = ev.get("id").and_then(Value::as_str).ok_or_else(|| {
                    schema(
                        id,
                        &field(&format!("entities[{j}].id")),
                        "missing or not a string",
                    )
                })?;
                match kg.entity(label) {
                    Some(entity) => entity_mentions.push(Mention {
                        start: span.0,
                        end: span.1,
                        entity,
                    }),
                    None => {
                        log::warn!("dialog {id}: dropping mention of unknown entity `{label}`");
                        *dropped += 1;
                    }
                }
            }
        }
        entity_mentions.sort();
        let mut recommended_items = Vec::new();
        if let Some(items) = tv.get("items") {
            let items = items
                .as_array()
                .ok_or_else(|| schema(id, &field("items"), "not an array"))?;
            if !items.is_empty() && speaker == Speaker::User {
                return Err(schema(
                    id,
                    &field("items"),
                    "only system turns recommend items",
                ));
            }
            for (j, item) in items.iter().enumerate() {
                let label = item
                    .as_str()
                    .ok_or_else(|| schema(id, &field(&format!("items[{j}]")), "not a string"))?;
                match kg.entity(label) {
                    Some(e) if entity_mentions.iter().any(|m| m.entity == e) => {
                        if !recommended_items.contains(&e) {
                            recommended_items.push(e);
                        }
                    }
                    Some(_) => {
                        return Err(schema(
                            id,
                            &field(&format!("items[{j}]")),
                            format!("item `{label}` is not mentioned in the turn"),
                        ))
                    }
                    None => {
                        log::warn!("dialog {id}: dropping unknown item `{label}`");
                        *dropped += 1;
                    }
                }
            }
        }
        turns.push(Turn {
            speaker,
            text,
            entity_mentions,
            recommended_items,
        });
    }
    Ok(Dialog { dialog_id, turns })
}

/// Parses JSONL text; blank lines are skipped.
pub fn parse_corpus(text: &str, kg: &KnowledgeGraph) -> Result<LoadedCorpus> {
    let mut dialogs = Vec::new();
    let mut dropped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| DicrError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        dialogs.push(parse_dialog(&v, kg, &mut dropped)?);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} mentions/items referring to unknown entities");
    }
    Ok(LoadedCorpus {
        dialogs,
        dropped_mentions: dropped,
    })
}

pub fn load_corpus(path: &Path, kg: &KnowledgeGraph) -> Result<LoadedCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
    parse_corpus(&text, kg)
}

pub fn dialog_to_json(d: &Dialog, kg: &KnowledgeGraph) -> Value {
    let turns: Vec<Value> = d
        .turns
        .iter()
        .map(|t| {
            let entities: Vec<Value> = t
                .entity_mentions
                .iter()
                .map(|m| json!({"span": [m.start, m.end], "id": kg.entity_label(m.entity)}))
                .collect();
            let items: Vec<&str> = t
                .recommended_items
                .iter()
                .map(|e| kg.entity_label(*e))
                .collect();
            json!({
                "speaker": t.speaker.as_str(),
                "text": t.text.join(" "),
                "entities": entities,
                "items": items,
            })
        })
        .collect();
    json!({"dialog_id": d.dialog_id, "turns": turns})
}

pub fn serialize_corpus(dialogs: &[Dialog], kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for d in dialogs {
        out.push_str(&dialog_to_json(d, kg).to_string());
        out.push('\n');
    }
    out
}
