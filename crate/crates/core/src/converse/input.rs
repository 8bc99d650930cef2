//! Word-id inputs for one conversation turn, with a per-turn extended
//! vocabulary for path tokens the word vocabulary lacks.

use crate::corpus::{WordVocab, EOS, UNK};

/// One candidate path as encoder ids and extended-vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTokens {
    pub words: Vec<usize>,
    pub ext: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverseInput {
    pub context: Vec<usize>,
    /// Gold response in extended ids, `<eos>`-terminated; empty at inference.
    pub target: Vec<usize>,
    /// Gold response as plain word ids (no `<eos>`).
    pub response: Vec<usize>,
    /// Gold tokenized statement, when one exists.
    pub statement: Option<Vec<usize>>,
    pub paths: Vec<PathTokens>,
    /// Path tokens outside the word vocabulary, id `vocab.len() + k`.
    pub oov: Vec<String>,
    pub vocab_size: usize,
}

impl ConverseInput {
    pub fn ext_size(&self) -> usize {
        self.vocab_size + self.oov.len()
    }

    /// Token string for an extended id.
    pub fn token<'a>(&'a self, vocab: &'a WordVocab, id: usize) -> &'a str {
        if id < self.vocab_size {
            vocab.token(id)
        } else {
            &self.oov[id - self.vocab_size]
        }
    }
}

/// Builds a turn input. Context keeps its last `max_context` tokens; an empty
/// context becomes a single `<unk>` so the encoder always has input.
pub fn prepare_input<S: AsRef<str>>(
    vocab: &WordVocab,
    context: &[S],
    response: Option<&[S]>,
    statement: Option<&[S]>,
    paths: &[Vec<String>],
    max_context: usize,
) -> ConverseInput {
    let skip = context.len().saturating_sub(max_context);
    let mut ctx = vocab.encode(&context[skip..]);
    if ctx.is_empty() {
        ctx.push(UNK);
    }
    let mut oov: Vec<String> = Vec::new();
    let mut path_tokens = Vec::with_capacity(paths.len());
    for p in paths {
        let mut words = Vec::with_capacity(p.len());
        let mut ext = Vec::with_capacity(p.len());
        for tok in p {
            let lower = tok.to_lowercase();
            match vocab.get(&lower) {
                Some(id) => {
                    words.push(id);
                    ext.push(id);
                }
                None => {
                    words.push(UNK);
                    let k = match oov.iter().position(|o| *o == lower) {
                        Some(k) => k,
                        None => {
                            oov.push(lower);
                            oov.len() - 1
                        }
                    };
                    ext.push(vocab.len() + k);
                }
            }
        }
        if words.is_empty() {
            words.push(UNK);
            ext.push(UNK);
        }
        path_tokens.push(PathTokens { words, ext });
    }
    let (response_ids, target) = match response {
        Some(r) => {
            let ids = vocab.encode(r);
            let mut target: Vec<usize> = r
                .iter()
                .zip(&ids)
                .map(|(w, &id)| {
                    if id != UNK {
                        return id;
                    }
                    let lower = w.as_ref().to_lowercase();
                    oov.iter()
                        .position(|o| *o == lower)
                        .map_or(UNK, |k| vocab.len() + k)
                })
                .collect();
            target.push(EOS);
            (ids, target)
        }
        None => (Vec::new(), Vec::new()),
    };
    let statement = statement.map(|s| vocab.encode(s)).filter(|s| !s.is_empty());
    ConverseInput {
        context: ctx,
        target,
        response: response_ids,
        statement,
        paths: path_tokens,
        oov,
        vocab_size: vocab.len(),
    }
}
