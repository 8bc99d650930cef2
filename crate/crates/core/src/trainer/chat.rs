//! Interactive session: link entities in each utterance, beam paths from the
//! latest one and answer with a generated response plus its top path.

use super::data::DataSet;
use super::evaluate::linked_entities;
use super::models::{generation_paths, Models};
use crate::converse::{generate, prepare_input, Decoding};
use crate::corpus::{tokenize_path, Speaker};
use crate::error::Result;
use crate::kg::{user_preference, EntityId, EntityLinker};

pub const FALLBACK: &str = "tell me about a film you like and i will find something related .";

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub response: Vec<String>,
    /// Tokenised top path; empty when nothing could be linked.
    pub explanation: Vec<String>,
    pub linked: Vec<EntityId>,
}

/// Splits on whitespace and detaches trailing punctuation.
pub fn tokenize_utterance(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let w = word.to_lowercase();
        let trimmed = w.trim_end_matches(['.', ',', '!', '?', ';', ':']);
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
        out.extend(w[trimmed.len()..].chars().map(|c| c.to_string()));
    }
    out
}

pub struct ChatSession<'a> {
    models: &'a Models,
    data: &'a DataSet,
    linker: EntityLinker,
    history: Vec<(Speaker, Vec<String>)>,
    entities: Vec<EntityId>,
}

impl<'a> ChatSession<'a> {
    pub fn new(models: &'a Models, data: &'a DataSet) -> Self {
        ChatSession {
            models,
            data,
            linker: EntityLinker::new(&data.kg, data.aliases.as_ref()),
            history: Vec::new(),
            entities: Vec::new(),
        }
    }

    fn context(&self) -> Vec<String> {
        let from = self
            .history
            .len()
            .saturating_sub(self.models.cfg.context_turns);
        let mut out = Vec::new();
        for (s, toks) in &self.history[from..] {
            out.push(s.tag().to_string());
            out.extend(toks.iter().cloned());
        }
        out
    }

    pub fn respond(&mut self, utterance: &str) -> Result<Reply> {
        let tokens = tokenize_utterance(utterance);
        let linked = linked_entities(&self.linker.link(&tokens));
        self.entities.extend(linked.iter().copied());
        self.history.push((Speaker::User, tokens));
        let reply = match self.entities.last() {
            None => Reply {
                response: tokenize_utterance(FALLBACK),
                explanation: Vec::new(),
                linked,
            },
            Some(&start) => self.recommend(start, linked)?,
        };
        self.history.push((Speaker::System, reply.response.clone()));
        Ok(reply)
    }

    fn recommend(&self, start: EntityId, linked: Vec<EntityId>) -> Result<Reply> {
        let (model, vocab) = self.models.converse()?;
        let cfg = &self.models.cfg;
        let pref = user_preference(&self.entities, &self.models.emb)?;
        let beam = self.models.env(&self.data.kg).beam_search(
            start,
            &pref.vector,
            cfg.beam_width,
            cfg.beam_width,
        )?;
        let paths = generation_paths(&beam, cfg.n_paths);
        let tokens: Vec<Vec<String>> = paths
            .iter()
            .map(|p| tokenize_path(p, &self.data.kg, &self.data.templates))
            .collect();
        let input = prepare_input(vocab, &self.context(), None, None, &tokens, cfg.max_context);
        let out = generate(model, vocab, &input, Decoding::Greedy, cfg.max_response)?;
        let response = if out.tokens.is_empty() {
            tokenize_utterance(FALLBACK)
        } else {
            out.tokens
        };
        Ok(Reply {
            response,
            explanation: tokens.into_iter().next().unwrap_or_default(),
            linked,
        })
    }
}
