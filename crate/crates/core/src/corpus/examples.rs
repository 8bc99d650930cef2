//! One training example per system turn.

use super::dialog::{Dialog, Speaker};
use super::gold::{extract_gold_path, gold_paths_per_target, GoldShiftPath};
use super::templates::RelationTemplates;
use crate::kg::{EntityId, KnowledgeGraph, ReasonPath};

#[derive(Debug, Clone)]
pub struct ExampleConfig {
    /// Turns of history flattened into the context text.
    pub context_turns: usize,
    pub max_path_len: usize,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            context_turns: 5,
            max_path_len: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub dialog_id: String,
    pub turn_index: usize,
    /// Speaker-tagged history tokens, oldest first.
    pub context: Vec<String>,
    /// Entities mentioned anywhere before the response, in mention order.
    pub context_entities: Vec<EntityId>,
    pub response: Vec<String>,
    pub response_entities: Vec<EntityId>,
    pub gold_items: Vec<EntityId>,
    pub gold_path: Option<GoldShiftPath>,
    /// Best path to each reachable gold item.
    pub item_paths: Vec<ReasonPath>,
}

impl TrainingExample {
    /// The entity the reasoning walk starts from: the last one mentioned.
    pub fn start_entity(&self) -> Option<EntityId> {
        self.context_entities.last().copied()
    }

    pub fn is_recommendation(&self) -> bool {
        !self.gold_items.is_empty()
    }
}

pub fn build_examples(
    dialogs: &[Dialog],
    kg: &KnowledgeGraph,
    templates: &RelationTemplates,
    cfg: &ExampleConfig,
) -> Vec<TrainingExample> {
    let mut out = Vec::new();
    for d in dialogs {
        for (i, turn) in d.turns.iter().enumerate() {
            if turn.speaker != Speaker::System {
                continue;
            }
            let from = i.saturating_sub(cfg.context_turns);
            let mut context = Vec::new();
            for prev in &d.turns[from..i] {
                context.push(prev.speaker.tag().to_string());
                context.extend(prev.text.iter().cloned());
            }
            let context_entities: Vec<EntityId> = d.turns[..i]
                .iter()
                .flat_map(|t| t.mentioned_entities())
                .collect();
            let gold_items = turn.recommended_items.clone();
            let gold_path = extract_gold_path(kg, &context_entities, &gold_items, cfg.max_path_len)
                .map(|p| GoldShiftPath::new(p, kg, templates));
            let item_paths =
                gold_paths_per_target(kg, &context_entities, &gold_items, cfg.max_path_len);
            out.push(TrainingExample {
                dialog_id: d.dialog_id.clone(),
                turn_index: i,
                context,
                context_entities,
                response: turn.text.clone(),
                response_entities: turn.mentioned_entities().collect(),
                gold_items,
                gold_path,
                item_paths,
            });
        }
    }
    out
}
