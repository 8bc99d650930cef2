//! Word vocabulary shared by the encoders and the decoder.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{DicrError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const USR: usize = 4;
pub const SYS: usize = 5;
pub const SPECIALS: [&str; 6] = ["<pad>", "<unk>", "<bos>", "<eos>", "<usr>", "<sys>"];

/// Lower-cased word list with the special tokens at fixed ids `0..6`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    pub fn from_tokens<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut v = WordVocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for w in words {
            v.push(w.to_lowercase());
        }
        v
    }

    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.tokens.len());
            self.tokens.push(w);
        }
    }

    /// Keeps words seen at least `min_freq` times, most frequent first.
    pub fn build<'a, I>(texts: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in text {
                *counts.entry(w.to_lowercase()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq.max(1) && !SPECIALS.contains(&w.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(w, _)| w))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let words: Vec<&str> = text.lines().collect();
        if words.len() < SPECIALS.len() || words[..SPECIALS.len()] != SPECIALS {
            return Err(DicrError::Checkpoint(
                "vocabulary file does not start with the special tokens".into(),
            ));
        }
        Ok(Self::from_tokens(
            words[SPECIALS.len()..].iter().map(|w| w.to_string()),
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| DicrError::path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse(&text)
    }
}
