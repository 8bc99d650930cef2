//! Actor, critic and path discriminator.
//!
//! With `f` the exponential-linear unit and `s` the state encoding:
//! - actor: `π(·|s) = softmax(A · f(W_a2 f(W_a1 s)))`, where each row of `A`
//!   is `[relation ; entity]` taken from the graph embeddings (the self-loop
//!   relation vector is learned);
//! - critic: `Q(s, a) = c_a · f(W_c2 f(W_c1 s))` with learned action vectors `c_a`;
//! - discriminator: `D(s, a) = σ(bᵀ tanh(W tanh(s ⊕ d_a)))`, clamped to
//!   `[1e-6, 1 − 1e-6]`, with learned action vectors `d_a`.
//!
//! The learned action tables start from the graph embeddings.

use rand::Rng;

use super::action::{Action, ActionSpace};
use super::state::state_dim;
use crate::error::{DicrError, Result};
use crate::kg::EmbeddingTable;
use crate::nn::{Init, ParamId, ParamStore, Tape, Tensor, Var};

pub const DISC_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// Graph embedding width `d`.
    pub dim: usize,
    pub history: usize,
    pub hidden: usize,
    pub disc_hidden: usize,
}

#[derive(Debug, Clone)]
pub struct PolicyNetworks {
    pub store: ParamStore,
    pub cfg: PolicyConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    pub actor_in: ParamId,
    pub actor_out: ParamId,
    pub self_loop: ParamId,
    pub critic_in: ParamId,
    pub critic_out: ParamId,
    pub critic_rel: ParamId,
    pub critic_ent: ParamId,
    pub disc_w: ParamId,
    pub disc_b: ParamId,
    pub disc_rel: ParamId,
    pub disc_ent: ParamId,
}

fn action_table(emb: &Tensor, extra_rows: usize, d: usize, rng: &mut impl Rng) -> Tensor {
    let mut data = emb.data.clone();
    let a = 1.0 / (d as f64).sqrt();
    data.extend((0..extra_rows * d).map(|_| rng.gen_range(-a..a)));
    Tensor::from_vec(emb.rows + extra_rows, d, data)
}

impl PolicyNetworks {
    pub fn new<R: Rng>(cfg: PolicyConfig, emb: &EmbeddingTable, rng: &mut R) -> Result<Self> {
        if cfg.dim != emb.dim {
            return Err(DicrError::config(format!(
                "policy width {} does not match embedding width {}",
                cfg.dim, emb.dim
            )));
        }
        if cfg.hidden == 0 || cfg.disc_hidden == 0 {
            return Err(DicrError::config("hidden sizes must be positive"));
        }
        let d = cfg.dim;
        let s = state_dim(cfg.history, d);
        let mut store = ParamStore::new();
        let actor_in = store.add("actor.w1", cfg.hidden, s, Init::Xavier, rng);
        let actor_out = store.add("actor.w2", 2 * d, cfg.hidden, Init::Xavier, rng);
        let self_loop = store.add(
            "actor.self_loop",
            d,
            1,
            Init::Uniform(1.0 / (d as f64).sqrt()),
            rng,
        );
        let critic_in = store.add("critic.w1", cfg.hidden, s, Init::Xavier, rng);
        let critic_out = store.add("critic.w2", 2 * d, cfg.hidden, Init::Xavier, rng);
        let critic_rel = store.insert("critic.relations", action_table(&emb.relations, 1, d, rng));
        let critic_ent = store.insert("critic.entities", action_table(&emb.entities, 0, d, rng));
        let disc_w = store.add("disc.w", cfg.disc_hidden, s + 2 * d, Init::Xavier, rng);
        let disc_b = store.add("disc.b", cfg.disc_hidden, 1, Init::Xavier, rng);
        let disc_rel = store.insert("disc.relations", action_table(&emb.relations, 1, d, rng));
        let disc_ent = store.insert("disc.entities", action_table(&emb.entities, 0, d, rng));
        Ok(PolicyNetworks {
            store,
            cfg,
            num_entities: emb.entities.rows,
            num_relations: emb.relations.rows,
            actor_in,
            actor_out,
            self_loop,
            critic_in,
            critic_out,
            critic_rel,
            critic_ent,
            disc_w,
            disc_b,
            disc_rel,
            disc_ent,
        })
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.cfg.history, self.cfg.dim)
    }

    pub fn actor_params(&self) -> Vec<ParamId> {
        vec![self.actor_in, self.actor_out, self.self_loop]
    }

    pub fn critic_params(&self) -> Vec<ParamId> {
        vec![
            self.critic_in,
            self.critic_out,
            self.critic_rel,
            self.critic_ent,
        ]
    }

    pub fn disc_params(&self) -> Vec<ParamId> {
        vec![self.disc_w, self.disc_b, self.disc_rel, self.disc_ent]
    }

    fn check_state(&self, len: usize) -> Result<()> {
        if len != self.state_dim() {
            return Err(DicrError::config(format!(
                "state has width {len}, networks expect {}",
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn check_action(&self, a: &Action) -> Result<()> {
        let bad_rel = a.relation.is_some_and(|r| r.0 >= self.num_relations);
        if bad_rel || a.entity.0 >= self.num_entities {
            return Err(DicrError::Lookup {
                kind: "action",
                name: format!("{:?}", a),
            });
        }
        Ok(())
    }

    fn mlp(&self, t: &mut Tape, w1: ParamId, w2: ParamId, state: Var) -> Var {
        let w1 = t.param(w1);
        let h = t.matvec(w1, state);
        let h = t.elu(h);
        let w2 = t.param(w2);
        let o = t.matvec(w2, h);
        t.elu(o)
    }

    /// Unnormalised actor scores, one per candidate.
    pub fn actor_logits(
        &self,
        t: &mut Tape,
        state: Var,
        space: &ActionSpace,
        emb: &EmbeddingTable,
    ) -> Var {
        let d = self.cfg.dim;
        let out = self.mlp(t, self.actor_in, self.actor_out, state);
        let out_rel = t.slice(out, 0, d);
        let out_ent = t.slice(out, d, d);
        let here = space.actions.last().expect("self-loop present").entity;
        let loop_rel = t.param(self.self_loop);
        let loop_ent = t.constant(emb.entity_vec(here));
        let a = t.dot(loop_rel, out_rel);
        let b = t.dot(loop_ent, out_ent);
        let loop_score = t.add(a, b);
        let edges = space.edges();
        if edges.is_empty() {
            return loop_score;
        }
        let mut rows = Vec::with_capacity(edges.len() * 2 * d);
        for act in edges {
            rows.extend(emb.relation_vec(act.relation.expect("edge action")));
            rows.extend(emb.entity_vec(act.entity));
        }
        let m = t.constant_matrix(edges.len(), 2 * d, rows);
        let edge_scores = t.matvec(m, out);
        t.concat(&[edge_scores, loop_score])
    }

    pub fn actor_probs(
        &self,
        t: &mut Tape,
        state: Var,
        space: &ActionSpace,
        emb: &EmbeddingTable,
    ) -> Var {
        let logits = self.actor_logits(t, state, space, emb);
        t.softmax(logits)
    }

    fn action_rows(
        &self,
        t: &mut Tape,
        rel_table: ParamId,
        ent_table: ParamId,
        a: &Action,
    ) -> (Var, Var) {
        let r = a.relation.map_or(self.num_relations, |r| r.0);
        (t.row(rel_table, r), t.row(ent_table, a.entity.0))
    }

    /// `Q(s, a)` for every candidate.
    pub fn critic_values(&self, t: &mut Tape, state: Var, space: &ActionSpace) -> Var {
        let d = self.cfg.dim;
        let out = self.mlp(t, self.critic_in, self.critic_out, state);
        let out_rel = t.slice(out, 0, d);
        let out_ent = t.slice(out, d, d);
        let (rels, ents): (Vec<Var>, Vec<Var>) = space
            .actions
            .iter()
            .map(|a| self.action_rows(t, self.critic_rel, self.critic_ent, a))
            .unzip();
        let rm = t.stack_rows(&rels);
        let em = t.stack_rows(&ents);
        let qr = t.matvec(rm, out_rel);
        let qe = t.matvec(em, out_ent);
        t.add(qr, qe)
    }

    /// Probability that `(state, action)` is a gold segment.
    pub fn disc_score(&self, t: &mut Tape, state: Var, action: &Action) -> Var {
        let (r, e) = self.action_rows(t, self.disc_rel, self.disc_ent, action);
        let x = t.concat(&[state, r, e]);
        let x = t.tanh(x);
        let w = t.param(self.disc_w);
        let h = t.matvec(w, x);
        let h = t.tanh(h);
        let b = t.param(self.disc_b);
        let z = t.dot(b, h);
        let p = t.sigmoid(z);
        t.clamp(p, DISC_EPS, 1.0 - DISC_EPS)
    }

    pub fn policy(
        &self,
        state: &[f64],
        space: &ActionSpace,
        emb: &EmbeddingTable,
    ) -> Result<Vec<f64>> {
        self.check_state(state.len())?;
        let mut t = Tape::new(&self.store);
        let s = t.constant(state.to_vec());
        let p = self.actor_probs(&mut t, s, space, emb);
        Ok(t.value(p).to_vec())
    }

    pub fn q_values(&self, state: &[f64], space: &ActionSpace) -> Result<Vec<f64>> {
        self.check_state(state.len())?;
        for a in &space.actions {
            self.check_action(a)?;
        }
        let mut t = Tape::new(&self.store);
        let s = t.constant(state.to_vec());
        let q = self.critic_values(&mut t, s, space);
        Ok(t.value(q).to_vec())
    }

    pub fn critic_q(&self, state: &[f64], action: &Action) -> Result<f64> {
        let space = ActionSpace {
            actions: vec![*action],
        };
        Ok(self.q_values(state, &space)?[0])
    }

    pub fn disc(&self, state: &[f64], action: &Action) -> Result<f64> {
        self.check_state(state.len())?;
        self.check_action(action)?;
        let mut t = Tape::new(&self.store);
        let s = t.constant(state.to_vec());
        let p = self.disc_score(&mut t, s, action);
        Ok(t.scalar(p))
    }
}
