//! Inference: prior path weights, response decoding and the semantic
//! similarity used as a reasoning reward.

use super::input::ConverseInput;
use super::model::{ConverseModel, Mode};
use crate::corpus::{WordVocab, BOS, EOS, PAD, UNK};
use crate::error::Result;
use crate::nn::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    Greedy,
    Beam(usize),
}

/// A decoded response in extended ids (without `<eos>`).
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    /// Prior weights over the candidate paths.
    pub prior: Vec<f64>,
}

struct Prepared {
    dc: super::model::DecodeContext,
    h0: Var,
    prior: Vec<f64>,
}

fn prepare(model: &ConverseModel, t: &mut Tape, input: &ConverseInput) -> Result<Prepared> {
    let enc = model.encode_turn(t, input, Mode::Infer)?;
    let o_c = enc.context.summary;
    let paths: Vec<Var> = enc.paths.iter().map(|p| p.summary).collect();
    let (mu, o_s) = if paths.is_empty() {
        (None, t.constant(vec![0.0; model.cfg.enc_dim()]))
    } else {
        let w = model.path_weights(t, o_c, None, &paths)?;
        (Some(w.prior), model.semantic_aggregate(t, o_c, &paths)?)
    };
    let prior = mu.map(|m| t.value(m).to_vec()).unwrap_or_default();
    let h0 = model.merge_state(t, o_s, o_c);
    let dc = model.decode_context(t, &enc, input, mu);
    Ok(Prepared { dc, h0, prior })
}

/// Tokens that are never emitted.
fn banned(id: usize) -> bool {
    id == PAD || id == BOS || id == UNK
}

fn argmax_allowed(p: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &v) in p.iter().enumerate() {
        if !banned(i) && v > p[best] {
            best = i;
        }
    }
    best
}

pub fn generate(
    model: &ConverseModel,
    vocab: &WordVocab,
    input: &ConverseInput,
    decoding: Decoding,
    max_tokens: usize,
) -> Result<Generated> {
    let mut t = Tape::new(&model.store);
    let prep = prepare(model, &mut t, input)?;
    let ids = match decoding {
        Decoding::Greedy | Decoding::Beam(0) | Decoding::Beam(1) => {
            greedy(model, &mut t, &prep, max_tokens)
        }
        Decoding::Beam(w) => beam(model, &mut t, &prep, w, max_tokens),
    };
    let tokens = ids
        .iter()
        .map(|&i| input.token(vocab, i).to_string())
        .collect();
    Ok(Generated {
        ids,
        tokens,
        prior: prep.prior,
    })
}

fn greedy(model: &ConverseModel, t: &mut Tape, prep: &Prepared, max_tokens: usize) -> Vec<usize> {
    let mut h = prep.h0;
    let mut prev = BOS;
    let mut out = Vec::new();
    for _ in 0..max_tokens {
        let step = model.step(t, &prep.dc, h, prev);
        let y = argmax_allowed(t.value(step.dist));
        if y == EOS {
            break;
        }
        out.push(y);
        h = model.advance(t, h, y, step.fused);
        prev = y;
    }
    out
}

#[derive(Clone)]
struct Hyp {
    ids: Vec<usize>,
    h: Var,
    score: f64,
    done: bool,
}

/// Beam decoding by summed log-probability; finished hypotheses compete
/// with live ones until all kept hypotheses are finished.
fn beam(
    model: &ConverseModel,
    t: &mut Tape,
    prep: &Prepared,
    width: usize,
    max_tokens: usize,
) -> Vec<usize> {
    let mut beam = vec![Hyp {
        ids: Vec::new(),
        h: prep.h0,
        score: 0.0,
        done: false,
    }];
    for _ in 0..max_tokens {
        if beam.iter().all(|h| h.done) {
            break;
        }
        let mut pool = Vec::new();
        for hyp in &beam {
            if hyp.done {
                pool.push(hyp.clone());
                continue;
            }
            let prev = hyp.ids.last().copied().unwrap_or(BOS);
            let step = model.step(t, &prep.dc, hyp.h, prev);
            let p = t.value(step.dist).to_vec();
            let mut cand: Vec<usize> = (0..p.len()).filter(|&i| !banned(i) && p[i] > 0.0).collect();
            cand.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
            cand.truncate(width);
            for y in cand {
                let score = hyp.score + p[y].ln();
                if y == EOS {
                    pool.push(Hyp {
                        ids: hyp.ids.clone(),
                        h: hyp.h,
                        score,
                        done: true,
                    });
                } else {
                    let h = model.advance(t, hyp.h, y, step.fused);
                    let mut ids = hyp.ids.clone();
                    ids.push(y);
                    pool.push(Hyp {
                        ids,
                        h,
                        score,
                        done: false,
                    });
                }
            }
        }
        pool.sort_by(|a, b| b.score.total_cmp(&a.score));
        pool.truncate(width);
        beam = pool;
    }
    beam.into_iter()
        .max_by(|a, b| {
            a.done
                .cmp(&b.done)
                .then(a.score.total_cmp(&b.score))
                .then(b.ids.cmp(&a.ids))
        })
        .map(|h| h.ids)
        .unwrap_or_default()
}

/// Posterior weights over the candidate paths given the gold response.
pub fn path_posterior(model: &ConverseModel, input: &ConverseInput) -> Result<Vec<f64>> {
    if input.paths.is_empty() {
        return Ok(Vec::new());
    }
    let mut t = Tape::new(&model.store);
    let enc = model.encode_turn(&mut t, input, Mode::Train)?;
    let paths: Vec<Var> = enc.paths.iter().map(|p| p.summary).collect();
    let w = model.path_weights(&mut t, enc.context.summary, enc.response, &paths)?;
    Ok(t.value(w.posterior.expect("training mode")).to_vec())
}

/// Semantic-encoder summary of a token sequence.
pub fn semantic_encoding(model: &ConverseModel, ids: &[usize]) -> Result<Vec<f64>> {
    let mut t = Tape::new(&model.store);
    let e = model.encode(&mut t, &model.sem_enc, ids)?;
    Ok(t.value(e.summary).to_vec())
}

/// Discriminator score between two semantic encodings.
pub fn semantic_score(model: &ConverseModel, x: &[f64], y: &[f64]) -> Result<f64> {
    let mut t = Tape::new(&model.store);
    let xv = t.constant(x.to_vec());
    let yv = t.constant(y.to_vec());
    let s = model.mim_score(&mut t, xv, yv)?;
    Ok(t.scalar(s))
}
