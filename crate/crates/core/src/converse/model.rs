//! Parameters and tape forward passes of the conversation model.

use rand::Rng;

use super::config::ConverseConfig;
use super::input::ConverseInput;
use crate::corpus::{BOS, UNK};
use crate::error::{DicrError, Result};
use crate::nn::{
    AdditiveAttention, AttentionKeys, BiGru, Encoded, Init, Linear, ParamId, ParamStore, Tape, Var,
};

/// Floor on prior mass inside the KL term.
pub const PRIOR_FLOOR: f64 = 1e-10;
/// Floor on gold-token probability inside the NLL.
pub const NLL_FLOOR: f64 = 1e-12;
/// Clamp on the semantic discriminator output.
pub const MIM_EPS: f64 = 1e-6;

/// Training mode uses the posterior and the gold statement; inference uses the
/// prior and the path aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct ConverseModel {
    pub store: ParamStore,
    pub cfg: ConverseConfig,
    pub vocab_size: usize,
    pub word_emb: ParamId,
    pub ctx_enc: BiGru,
    pub know_enc: BiGru,
    pub sem_enc: BiGru,
    pub w_kc: ParamId,
    pub w_ky: ParamId,
    pub bow: Linear,
    pub w_sp: ParamId,
    pub sem_attn: AdditiveAttention,
    pub w_phi: ParamId,
    pub merge: Linear,
    pub dec: crate::nn::GruCell,
    pub ctx_attn: AdditiveAttention,
    pub path_attn: AdditiveAttention,
    pub gate: Linear,
    pub out1: Linear,
    pub out2: Linear,
    pub gen: Linear,
}

/// Encodings shared by every loss of one turn.
#[derive(Debug, Clone)]
pub struct TurnEncoding {
    pub context: Encoded,
    pub paths: Vec<Encoded>,
    /// Response summary `o_Y` (training only).
    pub response: Option<Var>,
    /// Statement summary `o_U` (training only).
    pub statement: Option<Var>,
}

/// Prior and (in training) posterior weights over the candidate paths.
#[derive(Debug, Clone, Copy)]
pub struct PathWeights {
    pub prior: Var,
    pub log_posterior: Option<Var>,
    pub posterior: Option<Var>,
}

/// Per-turn values the decoder reads at every step.
#[derive(Debug, Clone)]
pub struct DecodeContext {
    pub ctx_keys: AttentionKeys,
    pub path_keys: Vec<AttentionKeys>,
    /// Extended ids of all path tokens, concatenated in path order.
    pub copy_index: Vec<usize>,
    pub mu: Option<Var>,
    pub ext_size: usize,
}

/// One decoder step's outputs.
#[derive(Debug, Clone, Copy)]
pub struct StepOut {
    /// Distribution over the extended vocabulary.
    pub dist: Var,
    pub p_vocab: Var,
    pub p_copy: Option<Var>,
    pub fused: Var,
    pub ctx_read: Var,
    pub gate: Var,
    pub xi: Var,
}

impl ConverseModel {
    pub fn new<R: Rng>(cfg: ConverseConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if vocab_size <= crate::corpus::SPECIALS.len() {
            return Err(DicrError::config("word vocabulary has no ordinary words"));
        }
        let mut s = ParamStore::new();
        let (w, h, d, a) = (cfg.word_dim, cfg.hidden, cfg.enc_dim(), cfg.attn_dim);
        let word_emb = s.add("word.emb", vocab_size, w, Init::Uniform(0.1), rng);
        let ctx_enc = BiGru::new(&mut s, "enc.ctx", w, h, cfg.layers, rng);
        let know_enc = BiGru::new(&mut s, "enc.know", w, h, cfg.layers, rng);
        let sem_enc = BiGru::new(&mut s, "enc.sem", w, h, cfg.layers, rng);
        let w_kc = s.add("know.w_kc", d, d, Init::Xavier, rng);
        let w_ky = s.add("know.w_ky", d, d, Init::Xavier, rng);
        let bow = Linear::new(&mut s, "know.bow", d, vocab_size, true, rng);
        let w_sp = s.add("sem.w_sp", d, d, Init::Xavier, rng);
        let sem_attn = AdditiveAttention::new(&mut s, "sem.attn", d, d, a, rng);
        let w_phi = s.add("sem.w_phi", d, d, Init::Xavier, rng);
        let merge = Linear::new(&mut s, "dec.merge", 2 * d, cfg.dec_hidden, true, rng);
        let dec = crate::nn::GruCell::new(&mut s, "dec.gru", w + d, cfg.dec_hidden, rng);
        let ctx_attn = AdditiveAttention::new(&mut s, "dec.ctx_attn", d, cfg.dec_hidden, a, rng);
        let path_attn = AdditiveAttention::new(&mut s, "dec.path_attn", d, cfg.dec_hidden, a, rng);
        let gate = Linear::new(&mut s, "dec.gate", cfg.max_context + d, 1, true, rng);
        let out1 = Linear::new(
            &mut s,
            "dec.out1",
            cfg.dec_hidden + d,
            cfg.mlp_hidden,
            true,
            rng,
        );
        let out2 = Linear::new(&mut s, "dec.out2", cfg.mlp_hidden, vocab_size, true, rng);
        let gen = Linear::new(&mut s, "dec.gen", w + cfg.dec_hidden + d, 1, true, rng);
        Ok(ConverseModel {
            store: s,
            cfg,
            vocab_size,
            word_emb,
            ctx_enc,
            know_enc,
            sem_enc,
            w_kc,
            w_ky,
            bow,
            w_sp,
            sem_attn,
            w_phi,
            merge,
            dec,
            ctx_attn,
            path_attn,
            gate,
            out1,
            out2,
            gen,
        })
    }

    /// Embeds word ids; extended ids fall back to `<unk>`.
    pub fn embed(&self, t: &mut Tape, ids: &[usize]) -> Vec<Var> {
        ids.iter()
            .map(|&i| t.row(self.word_emb, if i < self.vocab_size { i } else { UNK }))
            .collect()
    }

    pub fn encode(&self, t: &mut Tape, enc: &BiGru, ids: &[usize]) -> Result<Encoded> {
        if ids.is_empty() {
            return Err(DicrError::Precondition(
                "cannot encode an empty sequence".into(),
            ));
        }
        let xs = self.embed(t, ids);
        Ok(enc.forward(t, &xs))
    }

    /// Runs every encoder the mode needs.
    pub fn encode_turn(
        &self,
        t: &mut Tape,
        input: &ConverseInput,
        mode: Mode,
    ) -> Result<TurnEncoding> {
        let context = self.encode(t, &self.ctx_enc, &input.context)?;
        let paths = input
            .paths
            .iter()
            .map(|p| self.encode(t, &self.know_enc, &p.words))
            .collect::<Result<Vec<_>>>()?;
        let (response, statement) = match mode {
            Mode::Infer => (None, None),
            Mode::Train => {
                if input.response.is_empty() {
                    return Err(DicrError::Mode(
                        "training mode needs the gold response".into(),
                    ));
                }
                let y = self.encode(t, &self.ctx_enc, &input.response)?.summary;
                let u = match &input.statement {
                    Some(u) => Some(self.encode(t, &self.sem_enc, u)?.summary),
                    None => None,
                };
                (Some(y), u)
            }
        };
        Ok(TurnEncoding {
            context,
            paths,
            response,
            statement,
        })
    }

    fn path_scores(&self, t: &mut Tape, w: ParamId, query: Var, paths: &[Var]) -> Var {
        let wm = t.param(w);
        let q = t.matvec(wm, query);
        let q = t.tanh(q);
        let keys = t.stack_rows(paths);
        t.matvec(keys, q)
    }

    /// Prior `softmax(o_P · tanh(W_KC o_C))` and, given `o_Y`, the posterior.
    pub fn path_weights(
        &self,
        t: &mut Tape,
        o_c: Var,
        o_y: Option<Var>,
        paths: &[Var],
    ) -> Result<PathWeights> {
        if paths.is_empty() {
            return Err(DicrError::Precondition(
                "path weights need at least one path".into(),
            ));
        }
        let sc = self.path_scores(t, self.w_kc, o_c, paths);
        let prior = t.softmax(sc);
        let (log_posterior, posterior) = match o_y {
            Some(y) => {
                let sy = self.path_scores(t, self.w_ky, y, paths);
                (Some(t.log_softmax(sy)), Some(t.softmax(sy)))
            }
            None => (None, None),
        };
        Ok(PathWeights {
            prior,
            log_posterior,
            posterior,
        })
    }

    /// `Σ post · (log post − log max(prior, floor))`.
    pub fn kl_loss(&self, t: &mut Tape, w: &PathWeights) -> Result<Var> {
        let (Some(lp), Some(p)) = (w.log_posterior, w.posterior) else {
            return Err(DicrError::Mode("KL needs the posterior".into()));
        };
        let prior = t.clamp(w.prior, PRIOR_FLOOR, 1.0);
        let lq = t.log(prior);
        let diff = t.sub(lp, lq);
        Ok(t.dot(p, diff))
    }

    /// Posterior-weighted path summary projected to the vocabulary, scored
    /// against the response's ordinary tokens. Zero when there are none.
    pub fn bow_loss(&self, t: &mut Tape, posterior: Var, paths: &[Var], response: &[usize]) -> Var {
        let content: Vec<usize> = response
            .iter()
            .copied()
            .filter(|&i| !crate::corpus::WordVocab::is_special(i))
            .collect();
        if content.is_empty() {
            return t.constant(vec![0.0]);
        }
        let keys = t.stack_rows(paths);
        let agg = t.vecmat(posterior, keys);
        let logits = self.bow.forward(t, agg);
        let lp = t.log_softmax(logits);
        let picked: Vec<Var> = content.iter().map(|&i| t.pick(lp, i)).collect();
        let s = t.sum_scalars(&picked);
        t.scale(s, -1.0 / content.len() as f64)
    }

    /// Attention over path summaries with query `tanh(W_SP o_C)`.
    pub fn semantic_aggregate(&self, t: &mut Tape, o_c: Var, paths: &[Var]) -> Result<Var> {
        if paths.is_empty() {
            return Err(DicrError::Precondition(
                "aggregation needs at least one path".into(),
            ));
        }
        let w = t.param(self.w_sp);
        let q = t.matvec(w, o_c);
        let q = t.tanh(q);
        let keys = self.sem_attn.prepare(t, paths);
        Ok(self.sem_attn.attend(t, &keys, q).1)
    }

    /// Clamped `σ(xᵀ W y)`.
    pub fn mim_score(&self, t: &mut Tape, x: Var, y: Var) -> Result<Var> {
        let d = self.cfg.enc_dim();
        if t.len(x) != d || t.len(y) != d {
            return Err(DicrError::config(format!(
                "semantic discriminator expects width {d}, got {} and {}",
                t.len(x),
                t.len(y)
            )));
        }
        let w = t.param(self.w_phi);
        let wy = t.matvec(w, y);
        let s = t.dot(x, wy);
        let s = t.sigmoid(s);
        Ok(t.clamp(s, MIM_EPS, 1.0 - MIM_EPS))
    }

    /// Decoder initial state `tanh(W [o_S ; o_C] + b)`.
    pub fn merge_state(&self, t: &mut Tape, o_s: Var, o_c: Var) -> Var {
        let x = t.concat(&[o_s, o_c]);
        let h = self.merge.forward(t, x);
        t.tanh(h)
    }

    pub fn decode_context(
        &self,
        t: &mut Tape,
        enc: &TurnEncoding,
        input: &ConverseInput,
        mu: Option<Var>,
    ) -> DecodeContext {
        let ctx_keys = self.ctx_attn.prepare(t, &enc.context.states);
        let path_keys = enc
            .paths
            .iter()
            .map(|p| self.path_attn.prepare(t, &p.states))
            .collect();
        let copy_index = input
            .paths
            .iter()
            .flat_map(|p| p.ext.iter().copied())
            .collect();
        DecodeContext {
            ctx_keys,
            path_keys,
            copy_index,
            mu: if input.paths.is_empty() { None } else { mu },
            ext_size: input.ext_size(),
        }
    }

    /// Output distribution at state `h` after emitting `prev`.
    pub fn step(&self, t: &mut Tape, dc: &DecodeContext, h: Var, prev: usize) -> StepOut {
        let d = self.cfg.enc_dim();
        let (ctx_w, ctx_read) = self.ctx_attn.attend(t, &dc.ctx_keys, h);
        let mut copy_parts = Vec::new();
        let path_read = match dc.mu {
            Some(mu) => {
                let mut reads = Vec::with_capacity(dc.path_keys.len());
                for (i, keys) in dc.path_keys.iter().enumerate() {
                    let (w, v) = self.path_attn.attend(t, keys, h);
                    let m = t.pick(mu, i);
                    copy_parts.push(t.scale_by(w, m));
                    reads.push(v);
                }
                let stacked = t.stack_rows(&reads);
                t.vecmat(mu, stacked)
            }
            None => t.constant(vec![0.0; d]),
        };
        let pad = self.cfg.max_context - dc.ctx_keys.len.min(self.cfg.max_context);
        let gate_in = if pad > 0 {
            let z = t.constant(vec![0.0; pad]);
            t.concat(&[ctx_w, z, path_read])
        } else {
            t.concat(&[ctx_w, path_read])
        };
        let g = self.gate.forward(t, gate_in);
        let g = t.sigmoid(g);
        // v = path_read + g (ctx_read − path_read)
        let diff = t.sub(ctx_read, path_read);
        let gd = t.scale_by(diff, g);
        let fused = t.add(path_read, gd);
        let hv = t.concat(&[h, fused]);
        let hid = self.out1.forward(t, hv);
        let hid = t.tanh(hid);
        let logits = self.out2.forward(t, hid);
        let p_vocab = t.softmax(logits);
        let prev_emb = self.embed(t, &[prev])[0];
        let gen_in = t.concat(&[prev_emb, h, fused]);
        let xi = self.gen.forward(t, gen_in);
        let xi = t.sigmoid(xi);
        let extra = dc.ext_size - self.vocab_size;
        let pv = if extra > 0 {
            let z = t.constant(vec![0.0; extra]);
            t.concat(&[p_vocab, z])
        } else {
            p_vocab
        };
        let (dist, p_copy) = if copy_parts.is_empty() {
            (pv, None)
        } else {
            let w = t.concat(&copy_parts);
            let pc = t.scatter_add(w, dc.copy_index.clone(), dc.ext_size);
            let a = t.scale_by(pv, xi);
            let one_minus = t.one_minus(xi);
            let b = t.scale_by(pc, one_minus);
            (t.add(a, b), Some(pc))
        };
        StepOut {
            dist,
            p_vocab,
            p_copy,
            fused,
            ctx_read,
            gate: g,
            xi,
        }
    }

    /// Next recurrent state after emitting `token` from a step with fused read `fused`.
    pub fn advance(&self, t: &mut Tape, h: Var, token: usize, fused: Var) -> Var {
        let e = self.embed(t, &[token])[0];
        let x = t.concat(&[e, fused]);
        self.dec.step(t, x, h)
    }

    /// Teacher-forced `−(1/|Y|) Σ log max(P(y_t), floor)` over `target`.
    pub fn nll_loss(
        &self,
        t: &mut Tape,
        dc: &DecodeContext,
        h0: Var,
        target: &[usize],
    ) -> Result<Var> {
        if target.is_empty() {
            return Err(DicrError::Precondition("NLL needs a gold response".into()));
        }
        let mut h = h0;
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(target.len());
        for &y in target {
            let out = self.step(t, dc, h, prev);
            let p = t.pick(out.dist, y);
            let p = t.clamp(p, NLL_FLOOR, 1.0);
            terms.push(t.log(p));
            h = self.advance(t, h, y, out.fused);
            prev = y;
        }
        let s = t.sum_scalars(&terms);
        Ok(t.scale(s, -1.0 / target.len() as f64))
    }
}
